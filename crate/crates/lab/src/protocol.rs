//! What a subject sees during one period: the own-bid what-if table and the
//! outcome of a hypothesized opponent bid, both in raw experiment points.

use alpha_core::prob::qi;
use alpha_core::{AuctionSpec, Outcome, Role, Q};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::schedule::PeriodValues;

/// One subject's view of a period. Carries no identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeatContext {
    pub period: u32,
    #[serde(with = "crate::qser")]
    pub alpha: Q,
    pub role: Role,
    pub item_a: u32,
    pub item_b_own: u32,
    pub item_b_other: u32,
    pub bid_cap: u32,
}

impl SeatContext {
    pub fn new(period: u32, alpha: Q, role: Role, values: PeriodValues) -> Self {
        Self {
            period,
            alpha,
            role,
            item_a: values.item_a,
            item_b_own: values.item_b(role),
            item_b_other: values.item_b(role.other()),
            bid_cap: values.bid_cap(),
        }
    }

    pub fn values(&self) -> PeriodValues {
        match self.role {
            Role::Low => PeriodValues::new(self.item_a, self.item_b_own, self.item_b_other),
            Role::High => PeriodValues::new(self.item_a, self.item_b_other, self.item_b_own),
        }
    }

    pub fn spec(&self) -> Result<AuctionSpec> {
        self.values().spec(self.alpha)
    }

    pub fn check_bid(&self, bid: i64) -> Result<u32> {
        Ok(self.spec()?.bids().check(bid)?)
    }

    /// Raw points of `role` for a reduced outcome.
    pub fn raw_points(&self, outcome: &Outcome, role: Role) -> Q {
        let v = self.values();
        if outcome.winner == role {
            qi(v.item_b(role) as i128) - outcome.transfer
        } else {
            qi(v.item_a as i128) + outcome.transfer
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Item {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawOutcome {
    pub own_bid: u32,
    pub opp_bid: u32,
    pub winner_role: Role,
    pub you_receive: Item,
    #[serde(with = "crate::qser")]
    pub transfer: Q,
    #[serde(with = "crate::qser")]
    pub points: Q,
    #[serde(with = "crate::qser")]
    pub other_points: Q,
}

/// Resolves `own` against `opp` from the seat's point of view. Ties go to HV.
pub fn hypothesize(ctx: &SeatContext, own: i64, opp: i64) -> Result<RawOutcome> {
    let spec = ctx.spec()?;
    let own = spec.bids().check(own)?;
    let opp = spec.bids().check(opp)?;
    let (bl, bh) = match ctx.role {
        Role::Low => (own, opp),
        Role::High => (opp, own),
    };
    let outcome = spec
        .resolve(bl as i64, bh as i64)?
        .certain()
        .expect("sessions break ties deterministically");
    Ok(RawOutcome {
        own_bid: own,
        opp_bid: opp,
        winner_role: outcome.winner,
        you_receive: if outcome.winner == ctx.role { Item::B } else { Item::A },
        transfer: outcome.transfer,
        points: ctx.raw_points(&outcome, ctx.role),
        other_points: ctx.raw_points(&outcome, ctx.role.other()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Below,
    Equal,
    Above,
}

/// A number, or an inclusive range of the values it can take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Amount {
    Exact {
        #[serde(with = "crate::qser")]
        value: Q,
    },
    Range {
        #[serde(with = "crate::qser")]
        low: Q,
        #[serde(with = "crate::qser")]
        high: Q,
    },
}

impl Amount {
    fn between(a: Q, b: Q) -> Amount {
        if a == b {
            Amount::Exact { value: a }
        } else {
            Amount::Range {
                low: a.min(b),
                high: a.max(b),
            }
        }
    }

    pub fn contains(&self, x: Q) -> bool {
        match *self {
            Amount::Exact { value } => value == x,
            Amount::Range { low, high } => low <= x && x <= high,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRow {
    pub case: Case,
    /// Opponent bids covered by the row, inclusive.
    pub opp_bids: (u32, u32),
    pub you_receive: Item,
    pub transfer: Amount,
    pub points: Amount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfTable {
    pub own_bid: u32,
    /// Below, equal and above, skipping cases the bid domain rules out.
    pub rows: Vec<WhatIfRow>,
}

impl WhatIfTable {
    pub fn row(&self, case: Case) -> Option<&WhatIfRow> {
        self.rows.iter().find(|r| r.case == case)
    }
}

/// The three-case table for `own`: opponent bid below, equal to, or above.
pub fn what_if_table(ctx: &SeatContext, own: i64) -> Result<WhatIfTable> {
    let own = ctx.check_bid(own)?;
    let mut rows = Vec::with_capacity(3);
    let mut push = |case, lo: u32, hi: u32| -> Result<()> {
        let first = hypothesize(ctx, own as i64, lo as i64)?;
        let last = hypothesize(ctx, own as i64, hi as i64)?;
        debug_assert_eq!(first.winner_role, last.winner_role);
        rows.push(WhatIfRow {
            case,
            opp_bids: (lo, hi),
            you_receive: first.you_receive,
            transfer: Amount::between(first.transfer, last.transfer),
            points: Amount::between(first.points, last.points),
        });
        Ok(())
    };
    if own > 0 {
        push(Case::Below, 0, own - 1)?;
    }
    push(Case::Equal, own, own)?;
    if own < ctx.bid_cap {
        push(Case::Above, own + 1, ctx.bid_cap)?;
    }
    Ok(WhatIfTable { own_bid: own, rows })
}

/// Whether the table's exact and ranged entries cover the hypothesized
/// outcome for `opp`.
pub fn table_covers(table: &WhatIfTable, outcome: &RawOutcome) -> bool {
    let case = match outcome.opp_bid.cmp(&table.own_bid) {
        std::cmp::Ordering::Less => Case::Below,
        std::cmp::Ordering::Equal => Case::Equal,
        std::cmp::Ordering::Greater => Case::Above,
    };
    table.row(case).is_some_and(|r| {
        r.you_receive == outcome.you_receive
            && r.transfer.contains(outcome.transfer)
            && r.points.contains(outcome.points)
    })
}
