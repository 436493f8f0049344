//! Nash analysis: best responses, ε-Nash certificates, pure-profile
//! enumeration, strictness, and the mixing bounds that cap how far right a
//! winner-bid equilibrium can sit when approached by monotone behavior.

use crate::auction::{point_mass, AuctionSpec, MixedProfile, PriceRule, Role};
use crate::error::{Error, Result};
use crate::prob::{format_q, q, Prob, Q};

/// Enumeration is limited to `max_bid <= 64` unless the caller raises it.
pub const DEFAULT_ENUMERATION_CAP: u32 = 64;

/// Bids maximizing the role's expected payoff, with the maximum value.
pub fn best_responses<P: Prob>(
    spec: &AuctionSpec,
    role: Role,
    opponent: &[P],
) -> Result<(Vec<u32>, P)> {
    let payoffs = spec.expected_payoffs(role, opponent)?;
    Ok(argmax_set(&payoffs))
}

pub fn best_response_set<P: Prob>(
    spec: &AuctionSpec,
    role: Role,
    opponent: &[P],
) -> Result<Vec<u32>> {
    best_responses(spec, role, opponent).map(|(set, _)| set)
}

fn argmax_set<P: Prob>(payoffs: &[P]) -> (Vec<u32>, P) {
    let mut best = payoffs[0].clone();
    for u in &payoffs[1..] {
        if *u > best {
            best = u.clone();
        }
    }
    let set = payoffs
        .iter()
        .enumerate()
        .filter(|(_, u)| **u == best)
        .map(|(b, _)| b as u32)
        .collect();
    (set, best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashCertificate<P = f64> {
    pub profile: MixedProfile<P>,
    pub epsilon: P,
    /// Common support point `p` with the low support in `{0..p}` and the
    /// high support in `{p..max_bid}`, when one exists.
    pub payoff_determinant_bid: Option<u32>,
    pub support_low: Vec<u32>,
    pub support_high: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation<P = f64> {
    pub role: Role,
    pub bid: u32,
    /// Best-response value minus the payoff of this supported bid.
    pub gap: P,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NashCheck<P = f64> {
    Certified(NashCertificate<P>),
    Violated(Vec<Violation<P>>),
}

impl<P> NashCheck<P> {
    pub fn is_nash(&self) -> bool {
        matches!(self, NashCheck::Certified(_))
    }

    pub fn certificate(self) -> Option<NashCertificate<P>> {
        match self {
            NashCheck::Certified(c) => Some(c),
            NashCheck::Violated(_) => None,
        }
    }
}

/// Checks that every supported bid is within `epsilon` of the role's best
/// response value.
pub fn is_nash<P: Prob>(
    spec: &AuctionSpec,
    profile: &MixedProfile<P>,
    epsilon: P,
) -> Result<NashCheck<P>> {
    spec.check_len(profile.n_bids())?;
    let mut violations = Vec::new();
    for role in Role::BOTH {
        let payoffs = spec.expected_payoffs(role, profile.get(role.other()))?;
        let (_, best) = argmax_set(&payoffs);
        for (b, w) in profile.get(role).iter().enumerate() {
            if w.is_zero() {
                continue;
            }
            let gap = best.clone() - payoffs[b].clone();
            if gap > epsilon {
                violations.push(Violation {
                    role,
                    bid: b as u32,
                    gap,
                });
            }
        }
    }
    if !violations.is_empty() {
        return Ok(NashCheck::Violated(violations));
    }
    let support_low = profile.support(Role::Low);
    let support_high = profile.support(Role::High);
    let payoff_determinant_bid = determinant_bid(&support_low, &support_high);
    Ok(NashCheck::Certified(NashCertificate {
        profile: profile.clone(),
        epsilon,
        payoff_determinant_bid,
        support_low,
        support_high,
    }))
}

fn determinant_bid(support_low: &[u32], support_high: &[u32]) -> Option<u32> {
    let top_low = *support_low.iter().max()?;
    let bottom_high = *support_high.iter().min()?;
    (top_low == bottom_high).then_some(top_low)
}

/// All pure profiles `(bid_low, bid_high)` without a strictly improving
/// unilateral deviation.
pub fn enumerate_pure_nash(spec: &AuctionSpec, cap: u32) -> Result<Vec<(u32, u32)>> {
    let max_bid = spec.bids().max_bid();
    if max_bid > cap {
        return Err(Error::EnumerationCap {
            size: max_bid,
            cap,
        });
    }
    let n = spec.n_bids() as u32;
    let low = spec.payoff_matrix(Role::Low);
    let high = spec.payoff_matrix(Role::High);
    // Best value of each role against every opponent bid.
    let best_low: Vec<Q> = (0..n)
        .map(|r| (0..n).map(|b| low.get(b, r)).max().unwrap())
        .collect();
    let best_high: Vec<Q> = (0..n)
        .map(|r| (0..n).map(|b| high.get(b, r)).max().unwrap())
        .collect();
    let mut out = Vec::new();
    for bl in 0..n {
        for bh in 0..n {
            if low.get(bl, bh) == best_low[bh as usize] && high.get(bh, bl) == best_high[bl as usize]
            {
                out.push((bl, bh));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strictness {
    /// Each bid is the unique best response to the other.
    Strict,
    Weak,
    NotNash,
}

pub fn strictness(spec: &AuctionSpec, bid_low: i64, bid_high: i64) -> Result<Strictness> {
    let bl = spec.bids().check(bid_low)?;
    let bh = spec.bids().check(bid_high)?;
    let n = spec.n_bids();
    let low_br = best_response_set::<Q>(spec, Role::Low, &point_mass(n, bh))?;
    let high_br = best_response_set::<Q>(spec, Role::High, &point_mass(n, bl))?;
    if !low_br.contains(&bl) || !high_br.contains(&bh) {
        return Ok(Strictness::NotNash);
    }
    if low_br.len() == 1 && high_br.len() == 1 {
        Ok(Strictness::Strict)
    } else {
        Ok(Strictness::Weak)
    }
}

/// Bounds on the low agent's weight at the payoff-determinant bid `p` in a
/// winner-bid equilibrium approached by weakly payoff monotone behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixingBounds {
    /// `p - c_l`.
    pub tau: u32,
    /// Needed for the high agent not to undercut `p`: `1/(2 ES - 2 tau + 1)`.
    pub lower: Q,
    /// Implied by monotonicity of the approaching sequence:
    /// `1/min{4 tau, tau + c_l + 1}`.
    pub upper: Q,
    pub infeasible: bool,
}

pub fn mixing_bounds(spec: &AuctionSpec, p: u32) -> Result<MixingBounds> {
    if spec.price_rule() != PriceRule::WinnerBid {
        return Err(Error::UnsupportedAuction {
            required: "a winner-bid auction",
            alpha: format_q(spec.alpha()),
        });
    }
    let v = spec.valuations();
    let (cl, ch) = (v.c_low(), v.c_high());
    if !(cl..=ch).contains(&p) {
        return Err(Error::OutsideNashRange {
            bid: p,
            low: cl,
            high: ch,
        });
    }
    let tau = p - cl;
    if tau == 0 {
        return Err(Error::InvalidParameter(
            "mixing bounds need p > c_l (tau >= 1)".into(),
        ));
    }
    let es = (ch - cl) as i128;
    let t = tau as i128;
    let lower = q(1, 2 * es - 2 * t + 1);
    let upper = q(1, (4 * t).min(t + cl as i128 + 1));
    Ok(MixingBounds {
        tau,
        lower,
        upper,
        infeasible: lower > upper,
    })
}

/// A certified equilibrium close to a given profile.
#[derive(Debug, Clone, PartialEq)]
pub struct NearbyEquilibrium {
    pub determinant_bid: u32,
    /// Sup-norm distance from the probed profile to `equilibrium`; an upper
    /// bound on the distance to the set of equilibria with this bid.
    pub distance: f64,
    pub equilibrium: MixedProfile<f64>,
}

const CERTIFY_EPS: f64 = 1e-9;

/// Builds an equilibrium with payoff-determinant bid `p` near `profile` and
/// returns its distance.
///
/// In an extreme-price auction every equilibrium with determinant `p` has
/// one agent bidding `p` for sure (the high agent under winner-bid, the low
/// agent under loser-bid) while the other mixes on its side of `p`. The
/// mixing side is taken from `profile`, truncated to its side with the
/// truncated mass moved onto `p`, then blended with a point mass at `p` by
/// the smallest weight that removes every profitable deviation of the
/// pure side. Interior-price auctions use the strict equilibrium `(p, p)`.
pub fn equilibrium_near(
    spec: &AuctionSpec,
    profile: &MixedProfile<f64>,
    p: u32,
) -> Result<Option<NearbyEquilibrium>> {
    spec.check_len(profile.n_bids())?;
    let n = spec.n_bids();
    let v = spec.valuations();
    if !(v.c_low()..=v.c_high()).contains(&p) {
        return Err(Error::OutsideNashRange {
            bid: p,
            low: v.c_low(),
            high: v.c_high(),
        });
    }
    let candidate = match spec.price_rule() {
        PriceRule::Interior => MixedProfile::<f64>::pure(n, p, p),
        rule => {
            let (pure_role, keep): (Role, Box<dyn Fn(usize) -> bool>) = match rule {
                PriceRule::WinnerBid => (Role::High, Box::new(move |b| b <= p as usize)),
                _ => (Role::Low, Box::new(move |b| b >= p as usize)),
            };
            let mixing_role = pure_role.other();
            let mut mixed: Vec<f64> = profile.get(mixing_role).to_vec();
            let mut moved = 0.0;
            for (b, w) in mixed.iter_mut().enumerate() {
                if !keep(b) {
                    moved += *w;
                    *w = 0.0;
                }
            }
            mixed[p as usize] += moved;
            let theta = min_blend(spec, pure_role, &mixed, p);
            let point: Vec<f64> = point_mass(n, p);
            let blended: Vec<f64> = mixed
                .iter()
                .zip(&point)
                .map(|(m, d)| (1.0 - theta) * m + theta * d)
                .collect();
            match pure_role {
                Role::High => MixedProfile::from_parts(blended, point),
                Role::Low => MixedProfile::from_parts(point, blended),
            }
        }
    };
    if !is_nash(spec, &candidate, CERTIFY_EPS)?.is_nash() {
        return Ok(None);
    }
    Ok(Some(NearbyEquilibrium {
        determinant_bid: p,
        distance: profile.sup_distance(&candidate),
        equilibrium: candidate,
    }))
}

/// Smallest blend weight toward `δ_p` for the mixing side at which the pure
/// side has no profitable deviation from `p`. Each deviation's gain is
/// affine in the weight, so the constraint set is an interval ending at 1.
fn min_blend(spec: &AuctionSpec, pure_role: Role, mixed: &[f64], p: u32) -> f64 {
    let n = spec.n_bids();
    let mut at_mixed = Vec::new();
    let mut at_point = Vec::new();
    spec.expected_payoffs_fast(pure_role, mixed, &mut at_mixed);
    spec.expected_payoffs_fast(pure_role, &point_mass::<f64>(n, p), &mut at_point);
    let (t0, t1) = (at_mixed[p as usize], at_point[p as usize]);
    let mut theta: f64 = 0.0;
    for b in 0..n {
        let d0 = at_mixed[b] - t0;
        let d1 = at_point[b] - t1;
        if d0 <= 0.0 {
            continue;
        }
        let needed = if d1 < 0.0 { d0 / (d0 - d1) } else { 1.0 };
        theta = theta.max(needed);
    }
    // Nudge past the boundary so the exact check is not decided by rounding.
    (theta * (1.0 + 1e-12)).min(1.0)
}

/// Closest certified equilibrium over every determinant bid in the Nash
/// range.
pub fn nearest_equilibrium(
    spec: &AuctionSpec,
    profile: &MixedProfile<f64>,
) -> Result<Option<NearbyEquilibrium>> {
    let mut best: Option<NearbyEquilibrium> = None;
    for p in spec.constants().nash_range {
        if let Some(eq) = equilibrium_near(spec, profile, p)? {
            if best.as_ref().is_none_or(|b| eq.distance < b.distance) {
                best = Some(eq);
            }
        }
    }
    Ok(best)
}

/// Payoffs `(π_l, π_h)` of a profile, exact in the probability scalar.
pub fn profile_payoffs<P: Prob>(spec: &AuctionSpec, profile: &MixedProfile<P>) -> Result<(P, P)> {
    let mut out = [P::zero(), P::zero()];
    for (i, role) in Role::BOTH.into_iter().enumerate() {
        let payoffs = spec.expected_payoffs(role, profile.get(role.other()))?;
        out[i] = payoffs
            .iter()
            .zip(profile.get(role))
            .fold(P::zero(), |acc, (u, w)| acc + u.clone() * w.clone());
    }
    let [l, h] = out;
    Ok((l, h))
}
