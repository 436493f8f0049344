//! The canonical per-subject, per-period CSV log.

use std::io::{Read, Write};

use alpha_core::prob::{format_q, qi};
use alpha_core::{Role, Q};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::schedule::PeriodValues;
use crate::session::{is_equilibrium_outcome, EventLog};

pub const SESSION_CSV_HEADER: &str = "session_id,session_type,auction_alpha,period,pair_id,subject_id,role,item_a,item_b_own,item_b_other,bid,revisions,opp_bid,winner_role,transfer,raw_points,efficient,equilibrium_outcome";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRow {
    pub session_id: String,
    pub session_type: u8,
    #[serde(with = "crate::qser")]
    pub auction_alpha: Q,
    pub period: u32,
    pub pair_id: u32,
    pub subject_id: u32,
    pub role: Role,
    pub item_a: u32,
    pub item_b_own: u32,
    pub item_b_other: u32,
    pub bid: u32,
    pub revisions: u32,
    pub opp_bid: u32,
    pub winner_role: Role,
    #[serde(with = "crate::qser")]
    pub transfer: Q,
    #[serde(with = "crate::qser")]
    pub raw_points: Q,
    pub efficient: bool,
    pub equilibrium_outcome: bool,
}

impl SessionRow {
    pub fn values(&self) -> PeriodValues {
        match self.role {
            Role::Low => PeriodValues::new(self.item_a, self.item_b_own, self.item_b_other),
            Role::High => PeriodValues::new(self.item_a, self.item_b_other, self.item_b_own),
        }
    }

    /// Reduced payoff: raw points net of item A.
    pub fn reduced_payoff(&self) -> Q {
        self.raw_points - qi(self.item_a as i128)
    }
}

/// Rows ordered by period, pair, then LV before HV.
pub fn rows(log: &EventLog) -> Vec<SessionRow> {
    let c = &log.config;
    let mut out = Vec::with_capacity(log.records.len() * 2);
    for r in &log.records {
        for role in Role::BOTH {
            let own = r.subject(role);
            let other = r.subject(role.other());
            out.push(SessionRow {
                session_id: c.session_id.clone(),
                session_type: c.session_type.number(),
                auction_alpha: c.alpha,
                period: r.period,
                pair_id: r.pair_id,
                subject_id: own.subject,
                role,
                item_a: r.values.item_a,
                item_b_own: r.values.item_b(role),
                item_b_other: r.values.item_b(role.other()),
                bid: own.bid,
                revisions: own.revisions,
                opp_bid: other.bid,
                winner_role: r.winner,
                transfer: r.transfer,
                raw_points: own.points,
                efficient: r.efficient,
                equilibrium_outcome: r.equilibrium_outcome,
            });
        }
    }
    out
}

pub fn write_rows<'a>(rows: impl IntoIterator<Item = &'a SessionRow>, w: impl Write) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(SESSION_CSV_HEADER.split(','))?;
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[SessionRow]) -> String {
    let mut buf = Vec::new();
    write_rows(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn read_rows(r: impl Read) -> Result<Vec<SessionRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != SESSION_CSV_HEADER {
        return Err(LabError::Data(format!("unexpected header {:?}", header.join(","))));
    }
    Ok(rd.deserialize().collect::<std::result::Result<Vec<SessionRow>, _>>()?)
}

/// Checks that rows come in consistent LV/HV pairs whose outcomes follow
/// from the two bids. Returns one message per problem.
pub fn validate(rows: &[SessionRow]) -> Vec<String> {
    let mut problems = Vec::new();
    for pair in pairs(rows, &mut problems) {
        let [lv, hv] = pair;
        let label = format!("session {} period {} pair {}", lv.session_id, lv.period, lv.pair_id);
        let values = lv.values();
        if hv.values() != values || lv.auction_alpha != hv.auction_alpha {
            problems.push(format!("{label}: LV and HV rows disagree on values"));
            continue;
        }
        if lv.bid > values.bid_cap() || hv.bid > values.bid_cap() {
            problems.push(format!("{label}: bid above cap {}", values.bid_cap()));
            continue;
        }
        if lv.opp_bid != hv.bid || hv.opp_bid != lv.bid {
            problems.push(format!("{label}: opp_bid does not match the other row"));
        }
        let spec = match values.spec(lv.auction_alpha) {
            Ok(s) => s,
            Err(e) => {
                problems.push(format!("{label}: {e}"));
                continue;
            }
        };
        let o = spec
            .resolve(lv.bid as i64, hv.bid as i64)
            .expect("bids checked")
            .certain()
            .expect("ties go to HV");
        for row in [lv, hv] {
            if row.winner_role != o.winner || row.transfer != o.transfer {
                problems.push(format!("{label}: {} row outcome differs from resolution", row.role));
            }
            if row.reduced_payoff() != o.payoff(row.role) {
                problems.push(format!(
                    "{label}: {} raw points {} inconsistent with reduced payoff {}",
                    row.role,
                    format_q(row.raw_points),
                    format_q(o.payoff(row.role))
                ));
            }
            if row.efficient != o.is_efficient()
                || row.equilibrium_outcome != is_equilibrium_outcome(values, o.winner, o.transfer)
            {
                problems.push(format!("{label}: {} row flags are wrong", row.role));
            }
        }
    }
    problems
}

/// Groups rows into `[LV, HV]` pairs, reporting rows without a partner.
pub fn pairs<'a>(rows: &'a [SessionRow], problems: &mut Vec<String>) -> Vec<[&'a SessionRow; 2]> {
    let mut keyed: std::collections::BTreeMap<(&str, u32, u32), [Option<&SessionRow>; 2]> = Default::default();
    for r in rows {
        let slot = keyed.entry((r.session_id.as_str(), r.period, r.pair_id)).or_default();
        let i = match r.role {
            Role::Low => 0,
            Role::High => 1,
        };
        if slot[i].replace(r).is_some() {
            problems.push(format!(
                "session {} period {} pair {}: duplicate {} row",
                r.session_id, r.period, r.pair_id, r.role
            ));
        }
    }
    keyed
        .into_iter()
        .filter_map(|((s, p, id), slot)| match slot {
            [Some(l), Some(h)] => Some([l, h]),
            _ => {
                problems.push(format!("session {s} period {p} pair {id}: missing partner row"));
                None
            }
        })
        .collect()
}
