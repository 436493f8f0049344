//! Group means and standard deviations of standardized payoffs and bids.

use std::collections::BTreeMap;
use std::io::Write;

use alpha_core::prob::q_to_f64;
use alpha_core::Role;

use super::standardize::{auction_label, standardize, structure_label};
use crate::csvlog::{pairs, SessionRow};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub auction: String,
    pub structure: String,
    pub role: Role,
    pub n: usize,
    pub mean_std_payoff: f64,
    /// `n − 1` denominator; `None` for a single observation.
    pub sd_std_payoff: Option<f64>,
    pub mean_std_bid: f64,
    pub sd_std_bid: Option<f64>,
    pub efficiency_rate: f64,
    pub equilibrium_rate: f64,
}

pub const SUMMARY_CSV_HEADER: &str = "auction,structure,role,n,mean_std_payoff,sd_std_payoff,mean_std_bid,sd_std_bid,efficiency_rate,equilibrium_rate";

pub fn mean_sd(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.len() > 1).then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, sd)
}

#[derive(Default)]
struct Acc {
    payoff: Vec<f64>,
    bid: Vec<f64>,
    efficient: usize,
    equilibrium: usize,
}

/// One row per auction × valuation structure × role, in sorted key order.
/// Rows without a partner are skipped.
pub fn summary_table(rows: &[SessionRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String, Role), Acc> = BTreeMap::new();
    for pair in pairs(rows, &mut Vec::new()) {
        let m = standardize(pair);
        let key = |role| (auction_label(pair[0].auction_alpha), structure_label(pair[0]), role);
        for role in Role::BOTH {
            let acc = groups.entry(key(role)).or_default();
            acc.payoff.push(q_to_f64(m.payoff(role)));
            acc.bid.push(q_to_f64(m.bid(role)));
            acc.efficient += m.efficient as usize;
            acc.equilibrium += m.equilibrium_outcome as usize;
        }
    }
    groups
        .into_iter()
        .map(|((auction, structure, role), acc)| {
            let n = acc.payoff.len();
            let (mean_std_payoff, sd_std_payoff) = mean_sd(&acc.payoff);
            let (mean_std_bid, sd_std_bid) = mean_sd(&acc.bid);
            SummaryRow {
                auction,
                structure,
                role,
                n,
                mean_std_payoff,
                sd_std_payoff,
                mean_std_bid,
                sd_std_bid,
                efficiency_rate: acc.efficient as f64 / n as f64,
                equilibrium_rate: acc.equilibrium as f64 / n as f64,
            }
        })
        .collect()
}

pub fn write_summary_csv(table: &[SummaryRow], mut w: impl Write) -> Result<()> {
    let opt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| v.to_string());
    writeln!(w, "{SUMMARY_CSV_HEADER}")?;
    for r in table {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.auction,
            r.structure,
            r.role,
            r.n,
            r.mean_std_payoff,
            opt(r.sd_std_payoff),
            r.mean_std_bid,
            opt(r.sd_std_bid),
            r.efficiency_rate,
            r.equilibrium_rate
        )?;
    }
    Ok(())
}
