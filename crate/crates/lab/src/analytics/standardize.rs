//! Payoffs and bids in equity-surplus units.

use alpha_core::prob::{format_q, qi};
use alpha_core::{Role, Q};

use crate::csvlog::SessionRow;
use crate::schedule::{PeriodValues, SessionType, Structure};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StandardizedMetrics {
    /// `[LV, HV]`: `(π_i − c_i) / ES`.
    pub std_payoff: [Q; 2],
    /// `[LV, HV]`: `(b_i − c_l) / ES`.
    pub std_bid: [Q; 2],
    pub efficient: bool,
    pub equilibrium_outcome: bool,
}

impl StandardizedMetrics {
    pub fn payoff(&self, role: Role) -> Q {
        self.std_payoff[role_index(role)]
    }

    pub fn bid(&self, role: Role) -> Q {
        self.std_bid[role_index(role)]
    }
}

pub(crate) fn role_index(role: Role) -> usize {
    match role {
        Role::Low => 0,
        Role::High => 1,
    }
}

/// Standardized bid in a period with the given reduced values.
pub fn standardize_bid(values: PeriodValues, bid: u32) -> Q {
    let (vl, vh) = values.reduced();
    let (cl, ch) = (qi((vl / 2) as i128), qi((vh / 2) as i128));
    (qi(bid as i128) - cl) / (ch - cl)
}

/// Standardizes one pair given as its `[LV, HV]` rows.
pub fn standardize(pair: [&SessionRow; 2]) -> StandardizedMetrics {
    let values = pair[0].values();
    let (vl, vh) = values.reduced();
    let c = [qi((vl / 2) as i128), qi((vh / 2) as i128)];
    let es = c[1] - c[0];
    let std_payoff = [0, 1].map(|i| (pair[i].reduced_payoff() - c[i]) / es);
    let std_bid = [0, 1].map(|i| standardize_bid(values, pair[i].bid));
    StandardizedMetrics {
        std_payoff,
        std_bid,
        efficient: pair[0].efficient,
        equilibrium_outcome: pair[0].equilibrium_outcome,
    }
}

/// `WB`, `AB`, `LB`, or `alpha=…` for other price rules.
pub fn auction_label(alpha: Q) -> String {
    if alpha == qi(1) {
        "WB".into()
    } else if alpha == qi(0) {
        "LB".into()
    } else if alpha == alpha_core::prob::q(1, 2) {
        "AB".into()
    } else {
        format!("alpha={}", format_q(alpha))
    }
}

/// Valuation structure label of a row; sessions of type 3 and 4 keep their
/// own labels although they share values with 2B and 2A.
pub fn structure_label(row: &SessionRow) -> String {
    let values = row.values();
    let named = match SessionType::try_from(row.session_type) {
        Ok(SessionType::Three) if values == Structure::S3.values() => Some(Structure::S3),
        Ok(SessionType::Four) if values == Structure::S4.values() => Some(Structure::S4),
        _ => values.structure(),
    };
    match named {
        Some(s) => s.label().to_string(),
        None => {
            let (vl, vh) = values.reduced();
            format!("v={vl}/{vh}/{}", values.bid_cap())
        }
    }
}
