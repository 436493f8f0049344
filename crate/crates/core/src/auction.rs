//! The α-auction game: valuations, bids, outcome resolution and payoffs.
//!
//! Values are in reduced form: `v_i` is the agent's value of the contested
//! item net of the uncontested one. The higher bidder receives the item and
//! pays `alpha * winner_bid + (1 - alpha) * loser_bid` to the other agent. On
//! a tie the high-valuation agent receives the item with probability `gamma`.

use std::fmt;
use std::ops::RangeInclusive;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{format_q, q, q_to_f64, qi, Prob, Q};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    /// Lower valuation of the contested item.
    #[serde(rename = "LV")]
    Low,
    /// Higher valuation of the contested item.
    #[serde(rename = "HV")]
    High,
}

impl Role {
    pub const BOTH: [Role; 2] = [Role::Low, Role::High];

    pub fn other(self) -> Role {
        match self {
            Role::Low => Role::High,
            Role::High => Role::Low,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Role::Low => "LV",
            Role::High => "HV",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s.trim() {
            "LV" | "lv" | "low" => Some(Role::Low),
            "HV" | "hv" | "high" => Some(Role::High),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ValuationPair {
    low: u32,
    high: u32,
}

impl ValuationPair {
    pub fn new(low: u32, high: u32) -> Result<Self> {
        if low == 0 || low % 2 != 0 || high % 2 != 0 || low >= high {
            return Err(Error::InvalidValuations { low, high });
        }
        Ok(Self { low, high })
    }

    pub fn low(&self) -> u32 {
        self.low
    }

    pub fn high(&self) -> u32 {
        self.high
    }

    pub fn value(&self, role: Role) -> u32 {
        match role {
            Role::Low => self.low,
            Role::High => self.high,
        }
    }

    /// Net valuation `c_i = v_i / 2`: the transfer at which agent i is
    /// indifferent between winning and losing.
    pub fn net(&self, role: Role) -> u32 {
        self.value(role) / 2
    }

    pub fn c_low(&self) -> u32 {
        self.low / 2
    }

    pub fn c_high(&self) -> u32 {
        self.high / 2
    }

    pub fn equity_surplus(&self) -> u32 {
        self.c_high() - self.c_low()
    }
}

/// Bids are the integers `0..=max_bid`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BidDomain {
    max_bid: u32,
}

impl BidDomain {
    pub fn new(max_bid: u32) -> Self {
        Self { max_bid }
    }

    pub fn max_bid(&self) -> u32 {
        self.max_bid
    }

    pub fn len(&self) -> usize {
        self.max_bid as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, bid: i64) -> bool {
        (0..=self.max_bid as i64).contains(&bid)
    }

    pub fn check(&self, bid: i64) -> Result<u32> {
        if self.contains(bid) {
            Ok(bid as u32)
        } else {
            Err(Error::BidOutOfDomain {
                bid,
                max_bid: self.max_bid,
            })
        }
    }

    pub fn bids(&self) -> RangeInclusive<u32> {
        0..=self.max_bid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceRule {
    /// alpha = 1: the winner pays its own bid.
    WinnerBid,
    /// alpha = 0: the winner pays the loser's bid.
    LoserBid,
    /// 0 < alpha < 1.
    Interior,
}

impl PriceRule {
    pub fn is_extreme(self) -> bool {
        !matches!(self, PriceRule::Interior)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AuctionSpec {
    alpha: Q,
    gamma: Q,
    valuations: ValuationPair,
    bids: BidDomain,
}

impl AuctionSpec {
    pub fn new(alpha: Q, gamma: Q, valuations: ValuationPair, bids: BidDomain) -> Result<Self> {
        unit_interval("alpha", alpha)?;
        unit_interval("gamma", gamma)?;
        if bids.max_bid() < valuations.c_high() {
            return Err(Error::DomainTooSmall {
                max_bid: bids.max_bid(),
                half_high: valuations.c_high(),
            });
        }
        Ok(Self {
            alpha,
            gamma,
            valuations,
            bids,
        })
    }

    /// Convenience constructor with `gamma = 1`, the tie rule used in the lab.
    pub fn with_values(alpha: Q, v_low: u32, v_high: u32, max_bid: u32) -> Result<Self> {
        Self::new(
            alpha,
            Q::one(),
            ValuationPair::new(v_low, v_high)?,
            BidDomain::new(max_bid),
        )
    }

    pub fn winner_bid(v_low: u32, v_high: u32, max_bid: u32) -> Result<Self> {
        Self::with_values(Q::one(), v_low, v_high, max_bid)
    }

    pub fn average_bid(v_low: u32, v_high: u32, max_bid: u32) -> Result<Self> {
        Self::with_values(q(1, 2), v_low, v_high, max_bid)
    }

    pub fn loser_bid(v_low: u32, v_high: u32, max_bid: u32) -> Result<Self> {
        Self::with_values(Q::zero(), v_low, v_high, max_bid)
    }

    pub fn alpha(&self) -> Q {
        self.alpha
    }

    pub fn gamma(&self) -> Q {
        self.gamma
    }

    pub fn valuations(&self) -> ValuationPair {
        self.valuations
    }

    pub fn bids(&self) -> BidDomain {
        self.bids
    }

    pub fn n_bids(&self) -> usize {
        self.bids.len()
    }

    pub fn price_rule(&self) -> PriceRule {
        if self.alpha.is_one() {
            PriceRule::WinnerBid
        } else if self.alpha.is_zero() {
            PriceRule::LoserBid
        } else {
            PriceRule::Interior
        }
    }

    /// Short label: `WB`, `LB`, `AB` (alpha = 1/2), or `alpha=<a>`.
    pub fn label(&self) -> String {
        match self.price_rule() {
            PriceRule::WinnerBid => "WB".into(),
            PriceRule::LoserBid => "LB".into(),
            PriceRule::Interior if self.alpha == q(1, 2) => "AB".into(),
            PriceRule::Interior => format!("alpha={}", format_q(self.alpha)),
        }
    }

    pub fn transfer(&self, winner_bid: u32, loser_bid: u32) -> Q {
        self.alpha * qi(winner_bid as i128) + (Q::one() - self.alpha) * qi(loser_bid as i128)
    }

    fn outcome(&self, winner: Role, bid_low: u32, bid_high: u32) -> Outcome {
        let (wb, lb) = match winner {
            Role::Low => (bid_low, bid_high),
            Role::High => (bid_high, bid_low),
        };
        let transfer = self.transfer(wb, lb);
        let win_payoff = qi(self.valuations.value(winner) as i128) - transfer;
        let (payoff_low, payoff_high) = match winner {
            Role::Low => (win_payoff, transfer),
            Role::High => (transfer, win_payoff),
        };
        Outcome {
            winner,
            transfer,
            payoff_low,
            payoff_high,
        }
    }

    /// Resolves a bid pair. Ties with `0 < gamma < 1` come back as both
    /// branches with the probability that the high-valuation agent wins.
    pub fn resolve(&self, bid_low: i64, bid_high: i64) -> Result<Resolution> {
        let bl = self.bids.check(bid_low)?;
        let bh = self.bids.check(bid_high)?;
        Ok(self.resolve_unchecked(bl, bh))
    }

    pub(crate) fn resolve_unchecked(&self, bl: u32, bh: u32) -> Resolution {
        if bh > bl {
            Resolution::Certain(self.outcome(Role::High, bl, bh))
        } else if bl > bh {
            Resolution::Certain(self.outcome(Role::Low, bl, bh))
        } else if self.gamma.is_one() {
            Resolution::Certain(self.outcome(Role::High, bl, bh))
        } else if self.gamma.is_zero() {
            Resolution::Certain(self.outcome(Role::Low, bl, bh))
        } else {
            Resolution::Tie {
                high_wins: self.outcome(Role::High, bl, bh),
                low_wins: self.outcome(Role::Low, bl, bh),
                high_weight: self.gamma,
            }
        }
    }

    /// Expected payoff of `role` bidding `own` against an opponent bid.
    pub fn payoff(&self, role: Role, own: u32, opponent: u32) -> Q {
        let (bl, bh) = match role {
            Role::Low => (own, opponent),
            Role::High => (opponent, own),
        };
        self.resolve_unchecked(bl, bh).expected_payoff(role)
    }

    /// `U(bid | opponent)`: exact expected payoff against a mixed opponent.
    pub fn expected_payoff<P: Prob>(&self, role: Role, bid: i64, opponent: &[P]) -> Result<P> {
        let own = self.bids.check(bid)?;
        self.check_len(opponent.len())?;
        Ok(opponent
            .iter()
            .enumerate()
            .fold(P::zero(), |acc, (r, w)| {
                if w.is_zero() {
                    acc
                } else {
                    acc + w.clone() * P::from_q(self.payoff(role, own, r as u32))
                }
            }))
    }

    /// Expected payoffs of every bid: exact for `Q`, the prefix-sum route
    /// of [`AuctionSpec::expected_payoffs_fast`] for `f64`.
    pub fn expected_payoffs<P: Prob>(&self, role: Role, opponent: &[P]) -> Result<Vec<P>> {
        self.check_len(opponent.len())?;
        Ok(P::payoff_vector(self, role, opponent))
    }

    /// Expected payoffs of every bid in O(n) using prefix sums over the
    /// opponent distribution. Used on the logit solver's hot path.
    pub fn expected_payoffs_fast(&self, role: Role, opponent: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(opponent.len(), self.n_bids());
        let alpha = q_to_f64(self.alpha);
        let value = self.valuations.value(role) as f64;
        let win_tie = match role {
            Role::High => q_to_f64(self.gamma),
            Role::Low => 1.0 - q_to_f64(self.gamma),
        };
        let total_mean: f64 = opponent
            .iter()
            .enumerate()
            .map(|(r, w)| r as f64 * w)
            .sum();
        out.clear();
        out.reserve(opponent.len());
        // Mass and first moment strictly below the current bid.
        let (mut below, mut below_moment) = (0.0f64, 0.0f64);
        for (b, &at) in opponent.iter().enumerate() {
            let bf = b as f64;
            let above = (1.0 - below - at).max(0.0);
            let above_moment = total_mean - below_moment - bf * at;
            let u = below * (value - alpha * bf) - (1.0 - alpha) * below_moment
                + alpha * above_moment
                + (1.0 - alpha) * bf * above
                + at * (win_tie * (value - bf) + (1.0 - win_tie) * bf);
            out.push(u);
            below += at;
            below_moment += bf * at;
        }
    }

    pub fn payoff_matrix(&self, role: Role) -> PayoffMatrix {
        let n = self.n_bids();
        let mut entries = Vec::with_capacity(n * n);
        for b in 0..n as u32 {
            for r in 0..n as u32 {
                entries.push(self.payoff(role, b, r));
            }
        }
        PayoffMatrix { n, entries }
    }

    pub fn constants(&self) -> Constants {
        let v = self.valuations;
        Constants {
            c_low: v.c_low(),
            c_high: v.c_high(),
            nash_range: v.c_low()..=v.c_high(),
            equity_surplus: v.equity_surplus(),
            maximin_low: v.c_low(),
            maximin_high: v.c_high(),
        }
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_bids() {
            return Err(Error::LengthMismatch {
                expected: self.n_bids(),
                got: len,
            });
        }
        Ok(())
    }
}

impl fmt::Display for AuctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} v=({},{}) bids=0..={} gamma={}",
            self.label(),
            self.valuations.low,
            self.valuations.high,
            self.bids.max_bid,
            format_q(self.gamma)
        )
    }
}

fn unit_interval(name: &'static str, x: Q) -> Result<()> {
    if x < Q::zero() || x > Q::one() {
        return Err(Error::OutOfUnitInterval {
            name,
            value: format_q(x),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub winner: Role,
    pub transfer: Q,
    pub payoff_low: Q,
    pub payoff_high: Q,
}

impl Outcome {
    pub fn payoff(&self, role: Role) -> Q {
        match role {
            Role::Low => self.payoff_low,
            Role::High => self.payoff_high,
        }
    }

    pub fn is_efficient(&self) -> bool {
        self.winner == Role::High
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Certain(Outcome),
    /// Tie under a randomizing tie-breaker; `high_weight = gamma`.
    Tie {
        high_wins: Outcome,
        low_wins: Outcome,
        high_weight: Q,
    },
}

impl Resolution {
    pub fn expected_payoff(&self, role: Role) -> Q {
        match self {
            Resolution::Certain(o) => o.payoff(role),
            Resolution::Tie {
                high_wins,
                low_wins,
                high_weight,
            } => {
                *high_weight * high_wins.payoff(role)
                    + (Q::one() - *high_weight) * low_wins.payoff(role)
            }
        }
    }

    /// Branches with their probabilities.
    pub fn branches(&self) -> Vec<(Q, Outcome)> {
        match self {
            Resolution::Certain(o) => vec![(Q::one(), *o)],
            Resolution::Tie {
                high_wins,
                low_wins,
                high_weight,
            } => vec![
                (*high_weight, *high_wins),
                (Q::one() - *high_weight, *low_wins),
            ],
        }
    }

    /// The outcome when the resolution is deterministic.
    pub fn certain(&self) -> Option<Outcome> {
        match self {
            Resolution::Certain(o) => Some(*o),
            Resolution::Tie { .. } => None,
        }
    }
}

/// `(b, r)` entry: payoff to the role when it bids `b` against `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffMatrix {
    n: usize,
    entries: Vec<Q>,
}

impl PayoffMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, own: u32, opponent: u32) -> Q {
        self.entries[own as usize * self.n + opponent as usize]
    }

    pub fn row(&self, own: u32) -> &[Q] {
        let start = own as usize * self.n;
        &self.entries[start..start + self.n]
    }

    pub fn apply<P: Prob>(&self, opponent: &[P]) -> Vec<P> {
        (0..self.n as u32)
            .map(|b| {
                self.row(b)
                    .iter()
                    .zip(opponent)
                    .fold(P::zero(), |acc, (u, w)| {
                        if w.is_zero() {
                            acc
                        } else {
                            acc + w.clone() * P::from_q(*u)
                        }
                    })
            })
            .collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|x| q_to_f64(*x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constants {
    pub c_low: u32,
    pub c_high: u32,
    /// Candidate payoff-determinant bids `{c_l, …, c_h}`.
    pub nash_range: RangeInclusive<u32>,
    pub equity_surplus: u32,
    /// Guaranteed by bidding `c_l`, whatever the opponent does.
    pub maximin_low: u32,
    pub maximin_high: u32,
}

/// One distribution over bids per role.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedProfile<P = f64> {
    low: Vec<P>,
    high: Vec<P>,
}

impl<P: Prob> MixedProfile<P> {
    pub fn new(low: Vec<P>, high: Vec<P>) -> Result<Self> {
        if low.len() != high.len() {
            return Err(Error::LengthMismatch {
                expected: low.len(),
                got: high.len(),
            });
        }
        validate_distribution(Role::Low, &low)?;
        validate_distribution(Role::High, &high)?;
        Ok(Self { low, high })
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_parts(low: Vec<P>, high: Vec<P>) -> Self {
        Self { low, high }
    }

    pub fn uniform(n_bids: usize) -> Self {
        let w = P::from_q(q(1, n_bids as i128));
        Self {
            low: vec![w.clone(); n_bids],
            high: vec![w; n_bids],
        }
    }

    pub fn pure(n_bids: usize, bid_low: u32, bid_high: u32) -> Self {
        Self {
            low: point_mass(n_bids, bid_low),
            high: point_mass(n_bids, bid_high),
        }
    }

    pub fn for_spec(self, spec: &AuctionSpec) -> Result<Self> {
        spec.check_len(self.low.len())?;
        Ok(self)
    }

    pub fn n_bids(&self) -> usize {
        self.low.len()
    }

    pub fn get(&self, role: Role) -> &[P] {
        match role {
            Role::Low => &self.low,
            Role::High => &self.high,
        }
    }

    pub fn low(&self) -> &[P] {
        &self.low
    }

    pub fn high(&self) -> &[P] {
        &self.high
    }

    pub fn support(&self, role: Role) -> Vec<u32> {
        self.get(role)
            .iter()
            .enumerate()
            .filter(|(_, w)| !w.is_zero())
            .map(|(b, _)| b as u32)
            .collect()
    }

    pub fn expected_bid(&self, role: Role) -> f64 {
        self.get(role)
            .iter()
            .enumerate()
            .map(|(b, w)| b as f64 * w.to_f64())
            .sum()
    }

    pub fn to_f64(&self) -> MixedProfile<f64> {
        MixedProfile {
            low: self.low.iter().map(Prob::to_f64).collect(),
            high: self.high.iter().map(Prob::to_f64).collect(),
        }
    }

    /// Sup-norm distance over both roles.
    pub fn sup_distance(&self, other: &MixedProfile<P>) -> f64 {
        Role::BOTH
            .iter()
            .flat_map(|&r| self.get(r).iter().zip(other.get(r)))
            .map(|(a, b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max)
    }
}

pub fn point_mass<P: Prob>(n_bids: usize, bid: u32) -> Vec<P> {
    let mut v = vec![P::zero(); n_bids];
    v[bid as usize] = P::one();
    v
}

fn validate_distribution<P: Prob>(role: Role, dist: &[P]) -> Result<()> {
    if dist.is_empty() {
        return Err(Error::InvalidDistribution {
            role,
            reason: "empty".into(),
        });
    }
    if let Some(b) = dist.iter().position(|w| *w < P::zero()) {
        return Err(Error::InvalidDistribution {
            role,
            reason: format!("negative weight at bid {b}"),
        });
    }
    let total = dist.iter().fold(P::zero(), |acc, w| acc + w.clone());
    if (total.to_f64() - 1.0).abs() > P::sum_slack() || (P::sum_slack() == 0.0 && !total.is_one())
    {
        return Err(Error::InvalidDistribution {
            role,
            reason: format!("sums to {}", total.to_f64()),
        });
    }
    Ok(())
}
