//! Per-period empirical expected payoffs and what they say about the bids
//! actually chosen.

use std::collections::BTreeMap;
use std::io::Write;

use alpha_core::prob::q_to_f64;
use alpha_core::{AuctionSpec, Role, Q};

use super::standardize::{auction_label, role_index, structure_label};
use super::stats::sign_test;
use crate::csvlog::SessionRow;
use crate::error::{LabError, Result};

/// Expected payoff of every bid against the period's opposite-role bids,
/// each weighted `1 / (N/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffField {
    pub session_id: String,
    pub period: u32,
    pub spec: AuctionSpec,
    /// `[LV, HV]`, each of length `bid_cap + 1`.
    pub payoffs: [Vec<Q>; 2],
}

impl PayoffField {
    pub fn get(&self, role: Role) -> &[Q] {
        &self.payoffs[role_index(role)]
    }
}

fn field_from(spec: AuctionSpec, session_id: &str, period: u32, rows: &[&SessionRow]) -> Result<PayoffField> {
    for role in Role::BOTH {
        if !rows.iter().any(|r| r.role == role) {
            return Err(LabError::Data(format!(
                "session {session_id} period {period} has no {role} rows"
            )));
        }
    }
    let n = spec.n_bids() as u32;
    if let Some(r) = rows.iter().find(|r| r.bid >= n) {
        return Err(LabError::Data(format!(
            "session {session_id} period {period}: bid {} above cap {}",
            r.bid,
            n - 1
        )));
    }
    let payoffs = Role::BOTH.map(|role| {
        let opp: Vec<u32> = rows.iter().filter(|r| r.role == role.other()).map(|r| r.bid).collect();
        let k = Q::from_integer(opp.len() as i128);
        (0..n)
            .map(|b| opp.iter().map(|&r| spec.payoff(role, b, r)).sum::<Q>() / k)
            .collect::<Vec<Q>>()
    });
    Ok(PayoffField {
        session_id: session_id.to_string(),
        period,
        spec,
        payoffs,
    })
}

pub fn empirical_payoff_field(rows: &[SessionRow], session_id: &str, period: u32) -> Result<PayoffField> {
    let sel: Vec<&SessionRow> = rows
        .iter()
        .filter(|r| r.session_id == session_id && r.period == period)
        .collect();
    let first = sel
        .first()
        .ok_or_else(|| LabError::Data(format!("no rows for session {session_id} period {period}")))?;
    let spec = first.values().spec(first.auction_alpha)?;
    field_from(spec, session_id, period, &sel)
}

/// Rows of each session-period with its payoff field.
pub fn periods(rows: &[SessionRow]) -> Result<Vec<(PayoffField, Vec<&SessionRow>)>> {
    let mut grouped: BTreeMap<(&str, u32), Vec<&SessionRow>> = BTreeMap::new();
    for r in rows {
        grouped.entry((r.session_id.as_str(), r.period)).or_default().push(r);
    }
    grouped
        .into_iter()
        .map(|((s, p), rs)| {
            let spec = rs[0].values().spec(rs[0].auction_alpha)?;
            Ok((field_from(spec, s, p, &rs)?, rs))
        })
        .collect()
}

/// Ascending ranks `1..=n` with tied values sharing their mean rank.
pub fn mean_ranks(values: &[Q]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mean;
        }
        i = j + 1;
    }
    ranks
}

/// Ventile `1..=20` of a rank among `n` actions: `ceil(20 · rank / n)`.
pub fn ventile(rank: f64, n: usize) -> usize {
    ((20.0 * rank / n as f64).ceil() as usize).clamp(1, 20)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramRow {
    pub auction: String,
    pub role: Role,
    pub ventile: usize,
    pub frequency: f64,
}

pub const HISTOGRAM_CSV_HEADER: &str = "auction,role,ventile,frequency";

/// Share of chosen bids in each payoff-rank ventile, per auction and role.
pub fn ventile_histogram(rows: &[SessionRow]) -> Result<Vec<HistogramRow>> {
    let mut counts: BTreeMap<(String, Role), [usize; 20]> = BTreeMap::new();
    for (field, rs) in periods(rows)? {
        let ranks = Role::BOTH.map(|role| mean_ranks(field.get(role)));
        for r in rs {
            let rk = &ranks[role_index(r.role)];
            let v = ventile(rk[r.bid as usize], rk.len());
            counts.entry((auction_label(r.auction_alpha), r.role)).or_insert([0; 20])[v - 1] += 1;
        }
    }
    Ok(counts
        .into_iter()
        .flat_map(|((auction, role), c)| {
            let total: usize = c.iter().sum();
            (0..20).map(move |i| HistogramRow {
                auction: auction.clone(),
                role,
                ventile: i + 1,
                frequency: c[i] as f64 / total as f64,
            })
        })
        .collect())
}

pub fn write_histogram_csv(rows: &[HistogramRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "{HISTOGRAM_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.auction, r.role, r.ventile, r.frequency)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitLevel {
    Session,
    /// Session × valuation structure.
    ValuationSession,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitDifference {
    pub unit: String,
    /// Mean over the unit's period-role cells of (mean payoff of played
    /// bids − mean payoff of unplayed bids).
    pub difference: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayedVsUnplayed {
    pub units: Vec<UnitDifference>,
    pub positive: usize,
    pub nonzero: usize,
    /// One-sided exact binomial p-value for "played beats unplayed".
    pub p_value: f64,
}

pub fn played_vs_unplayed(rows: &[SessionRow], level: UnitLevel) -> Result<PlayedVsUnplayed> {
    let mut units: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (field, rs) in periods(rows)? {
        let unit = match level {
            UnitLevel::Session => field.session_id.clone(),
            UnitLevel::ValuationSession => format!("{}/{}", field.session_id, structure_label(rs[0])),
        };
        for role in Role::BOTH {
            let payoffs = field.get(role);
            let mut chosen = vec![false; payoffs.len()];
            let mut played = Vec::new();
            for r in rs.iter().filter(|r| r.role == role) {
                chosen[r.bid as usize] = true;
                played.push(q_to_f64(payoffs[r.bid as usize]));
            }
            let unplayed: Vec<f64> = payoffs
                .iter()
                .zip(&chosen)
                .filter(|(_, c)| !**c)
                .map(|(u, _)| q_to_f64(*u))
                .collect();
            if played.is_empty() || unplayed.is_empty() {
                continue;
            }
            let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
            units.entry(unit.clone()).or_default().push(mean(&played) - mean(&unplayed));
        }
    }
    let units: Vec<UnitDifference> = units
        .into_iter()
        .map(|(unit, d)| UnitDifference {
            unit,
            difference: d.iter().sum::<f64>() / d.len() as f64,
            cells: d.len(),
        })
        .collect();
    let positive = units.iter().filter(|u| u.difference > 0.0).count();
    let nonzero = units.iter().filter(|u| u.difference != 0.0).count();
    Ok(PlayedVsUnplayed {
        p_value: sign_test(positive, nonzero),
        units,
        positive,
        nonzero,
    })
}
