//! Weak payoff monotonicity, the bias windows that constrain which Nash
//! equilibria of the extreme-price auctions monotone behavior can
//! approach, sequence checks against those windows, and a randomized probe
//! of the excluded region.

use std::fmt;

use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::auction::{AuctionSpec, MixedProfile, PriceRule, Role};
use crate::equilibrium::{equilibrium_near, NashCertificate};
use crate::error::{Error, Result};
use crate::prob::{format_q, q, q_to_f64, qi, Prob, Q};
use crate::qre::payoffs_f64;

/// Slack for the two comparisons in the monotonicity test.
///
/// A violation is recorded when `σ(a) > σ(b) + prob` while
/// `U(a) <= U(b) + payoff`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub prob: f64,
    pub payoff: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            prob: 1e-9,
            payoff: 0.0,
        }
    }
}

impl Tolerances {
    pub const ZERO: Tolerances = Tolerances {
        prob: 0.0,
        payoff: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityViolation {
    pub role: Role,
    /// The more frequently played bid.
    pub bid_a: u32,
    pub bid_b: u32,
    pub prob_a: f64,
    pub prob_b: f64,
    pub payoff_a: f64,
    pub payoff_b: f64,
}

impl fmt::Display for MonotonicityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "role={} bid_a={} bid_b={} prob_a={} prob_b={} payoff_a={} payoff_b={}",
            self.role,
            self.bid_a,
            self.bid_b,
            self.prob_a,
            self.prob_b,
            self.payoff_a,
            self.payoff_b
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub ok: bool,
    pub violations: Vec<MonotonicityViolation>,
    pub tolerances: Tolerances,
}

impl MonotonicityReport {
    /// One record per line: a header line then one line per violation.
    pub fn to_lines(&self) -> String {
        let mut out = format!(
            "ok={} violations={} tol_prob={} tol_payoff={}\n",
            self.ok,
            self.violations.len(),
            self.tolerances.prob,
            self.tolerances.payoff
        );
        for v in &self.violations {
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }
}

fn exceeds<P: Prob>(a: &P, b: &P, tol: f64) -> bool {
    if tol == 0.0 {
        a > b
    } else {
        a.to_f64() > b.to_f64() + tol
    }
}

/// Checks every ordered pair of bids of both roles.
pub fn is_weakly_payoff_monotone<P: Prob>(
    spec: &AuctionSpec,
    profile: &MixedProfile<P>,
    tol: Tolerances,
) -> Result<MonotonicityReport> {
    spec.check_len(profile.n_bids())?;
    let mut violations = Vec::new();
    for role in Role::BOTH {
        let payoffs = spec.expected_payoffs(role, profile.get(role.other()))?;
        let probs = profile.get(role);
        for a in 0..probs.len() {
            for b in 0..probs.len() {
                if a != b
                    && exceeds(&probs[a], &probs[b], tol.prob)
                    && !exceeds(&payoffs[a], &payoffs[b], tol.payoff)
                {
                    violations.push(MonotonicityViolation {
                        role,
                        bid_a: a as u32,
                        bid_b: b as u32,
                        prob_a: probs[a].to_f64(),
                        prob_b: probs[b].to_f64(),
                        payoff_a: payoffs[a].to_f64(),
                        payoff_b: payoffs[b].to_f64(),
                    });
                }
            }
        }
    }
    Ok(MonotonicityReport {
        ok: violations.is_empty(),
        violations,
        tolerances: tol,
    })
}

/// `O(n log n)` monotonicity test of one role given its payoffs.
fn role_is_monotone(probs: &[f64], payoffs: &[f64], tol: Tolerances) -> bool {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    // Walk bids from most to least likely, tracking the lowest payoff among
    // bids that are played strictly more often than the current one.
    let mut min_payoff = f64::INFINITY;
    let mut frontier = 0;
    for &b in &order {
        while frontier < order.len() && probs[order[frontier]] > probs[b] + tol.prob {
            min_payoff = min_payoff.min(payoffs[order[frontier]]);
            frontier += 1;
        }
        if min_payoff <= payoffs[b] + tol.payoff {
            return false;
        }
    }
    true
}

/// Which reading of the loser-bid cutoff to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TVariant {
    /// `max{2(p̄ − c_l)/3 − c_h, ES/3} + 1`.
    #[default]
    Verbatim,
    /// `max{2(p̄ − c_l)/3 − (p̄ − c_h), ES/3} + 1`, the reflection of the
    /// winner-bid cutoff under `b ↦ p̄ − b`.
    Mirror,
}

impl TVariant {
    pub fn parse(s: &str) -> Option<TVariant> {
        match s.to_ascii_lowercase().as_str() {
            "verbatim" => Some(TVariant::Verbatim),
            "mirror" => Some(TVariant::Mirror),
            _ => None,
        }
    }
}

fn require_extreme(spec: &AuctionSpec) -> Result<PriceRule> {
    let rule = spec.price_rule();
    if !rule.is_extreme() {
        return Err(Error::UnsupportedAuction {
            required: "an extreme-price auction (alpha = 0 or 1)",
            alpha: format_q(spec.alpha()),
        });
    }
    Ok(rule)
}

/// Cutoff `t(v)` of the bias window.
pub fn t_value(spec: &AuctionSpec, variant: TVariant) -> Result<Q> {
    let rule = require_extreme(spec)?;
    let v = spec.valuations();
    let (cl, ch) = (qi(v.c_low() as i128), qi(v.c_high() as i128));
    let pbar = qi(spec.bids().max_bid() as i128);
    let third = q(1, 3);
    let es_third = (ch - cl) * third;
    let lead = match (rule, variant) {
        (PriceRule::WinnerBid, _) => qi(2) * ch * third - cl,
        (_, TVariant::Verbatim) => qi(2) * (pbar - cl) * third - ch,
        (_, TVariant::Mirror) => qi(2) * (pbar - cl) * third - (pbar - ch),
    };
    Ok(lead.max(es_third) + Q::one())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    MeanBid(Role),
    Payoff(Role),
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quantity::MeanBid(r) => write!(f, "E_{r}(b)"),
            Quantity::Payoff(r) => write!(f, "pi_{r}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
}

/// `quantity cmp value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bound {
    pub quantity: Quantity,
    pub cmp: Cmp,
    pub value: Q,
}

impl Bound {
    fn new(quantity: Quantity, cmp: Cmp, value: Q) -> Self {
        Self {
            quantity,
            cmp,
            value,
        }
    }

    pub fn holds(&self, x: f64) -> bool {
        let v = q_to_f64(self.value);
        match self.cmp {
            Cmp::Lt => x < v,
            Cmp::Le => x <= v,
            Cmp::Gt => x > v,
            Cmp::Ge => x >= v,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.cmp {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
        };
        write!(f, "{} {op} {}", self.quantity, format_q(self.value))
    }
}

/// `E_{earlier}(b) < E_{later}(b)`, required when the target equilibrium
/// satisfies `condition`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ordering {
    pub condition: Bound,
    pub lower: Role,
    pub higher: Role,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiasWindow {
    pub rule: PriceRule,
    pub variant: TVariant,
    pub t_value: Q,
    /// Statement 1; `None` when its valuation condition fails.
    pub side_bound: Option<Bound>,
    /// Statement 2: open expected-bid window of the mixing side.
    pub bid_window: [Bound; 2],
    /// Statement 3: cap on the disfavored role and floor on the favored one.
    pub payoff_bounds: [Bound; 2],
    /// Statement 4.
    pub ordering: Ordering,
    /// Payoff-determinant bids that monotone behavior can approach,
    /// inclusive; `None` if empty.
    pub admissible_segment: Option<(u32, u32)>,
}

pub fn bias_window(spec: &AuctionSpec, variant: TVariant) -> Result<BiasWindow> {
    let rule = require_extreme(spec)?;
    let t = t_value(spec, variant)?;
    let v = spec.valuations();
    let (cl_n, ch_n) = (v.c_low(), v.c_high());
    let (cl, ch) = (qi(cl_n as i128), qi(ch_n as i128));
    let es = ch - cl;
    let pbar = qi(spec.bids().max_bid() as i128);
    use Quantity::{MeanBid, Payoff};
    use Role::{High, Low};
    let window = match rule {
        PriceRule::WinnerBid => {
            let upper = (qi(2) * ch * q(1, 3)).max(cl + es * q(1, 3));
            let top = floor(upper).min(ch_n as i128).min(ceil(cl + t) - 1);
            BiasWindow {
                rule,
                variant,
                t_value: t,
                side_bound: (3 * v.low() >= v.high()).then(|| Bound::new(MeanBid(Low), Cmp::Lt, cl + 1)),
                bid_window: [
                    Bound::new(MeanBid(High), Cmp::Gt, cl - 1),
                    Bound::new(MeanBid(High), Cmp::Lt, cl + t),
                ],
                payoff_bounds: [
                    Bound::new(Payoff(Low), Cmp::Lt, cl + t),
                    Bound::new(Payoff(High), Cmp::Gt, ch + (es - t)),
                ],
                ordering: Ordering {
                    condition: Bound::new(Payoff(Low), Cmp::Gt, cl),
                    lower: Low,
                    higher: High,
                },
                admissible_segment: (top >= cl_n as i128).then_some((cl_n, top as u32)),
            }
        }
        _ => {
            let lower = (qi(2) * cl * q(1, 3) + pbar * q(1, 3)).min(ch - es * q(1, 3));
            let bottom = ceil(lower).max(cl_n as i128).max(floor(ch - t) + 1);
            BiasWindow {
                rule,
                variant,
                t_value: t,
                side_bound: (ch <= pbar - (pbar - cl) * q(1, 3))
                    .then(|| Bound::new(MeanBid(High), Cmp::Ge, ch - 1)),
                bid_window: [
                    Bound::new(MeanBid(Low), Cmp::Gt, ch - t),
                    Bound::new(MeanBid(Low), Cmp::Lt, ch + 1),
                ],
                payoff_bounds: [
                    Bound::new(Payoff(High), Cmp::Lt, ch + t),
                    Bound::new(Payoff(Low), Cmp::Gt, cl + (es - t)),
                ],
                ordering: Ordering {
                    condition: Bound::new(Payoff(High), Cmp::Lt, ch),
                    lower: Low,
                    higher: High,
                },
                admissible_segment: (bottom <= ch_n as i128).then_some((bottom as u32, ch_n)),
            }
        }
    };
    Ok(window)
}

fn floor(x: Q) -> i128 {
    x.floor().to_integer()
}

fn ceil(x: Q) -> i128 {
    x.ceil().to_integer()
}

impl BiasWindow {
    pub fn admits(&self, p: u32) -> bool {
        self.admissible_segment
            .is_some_and(|(lo, hi)| (lo..=hi).contains(&p))
    }
}

/// Summary statistics of one profile that the window statements refer to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileStats {
    pub mean_bid: [f64; 2],
    pub payoff: [f64; 2],
}

impl ProfileStats {
    pub fn of(spec: &AuctionSpec, profile: &MixedProfile<f64>) -> Result<Self> {
        let (pl, ph) = payoffs_f64(spec, profile)?;
        Ok(Self {
            mean_bid: [
                profile.expected_bid(Role::Low),
                profile.expected_bid(Role::High),
            ],
            payoff: [pl, ph],
        })
    }

    pub fn get(&self, q: Quantity) -> f64 {
        let idx = |r: Role| match r {
            Role::Low => 0,
            Role::High => 1,
        };
        match q {
            Quantity::MeanBid(r) => self.mean_bid[idx(r)],
            Quantity::Payoff(r) => self.payoff[idx(r)],
        }
    }
}

/// Pass/fail of statements 1–4 at one index; `None` when not applicable.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexCheck {
    pub index: usize,
    pub distance: f64,
    pub stats: ProfileStats,
    pub statements: [Option<bool>; 4],
}

impl IndexCheck {
    /// True when every applicable statement among `which` (1-based) holds.
    pub fn holds(&self, which: &[usize]) -> bool {
        which
            .iter()
            .all(|&s| self.statements[s - 1].unwrap_or(true))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceReport {
    pub window: Option<BiasWindow>,
    pub checks: Vec<IndexCheck>,
    /// Whether the distance to the target never increases along the sequence.
    pub distance_non_increasing: bool,
    /// First index from which every applicable statement holds at every
    /// later index.
    pub tail_start: Option<usize>,
}

impl SequenceReport {
    /// First index from which the listed statements hold at every later index.
    pub fn tail_start_for(&self, which: &[usize]) -> Option<usize> {
        let mut start = None;
        for c in self.checks.iter().rev() {
            if c.holds(which) {
                start = Some(c.index);
            } else {
                break;
            }
        }
        start
    }

    pub fn to_lines(&self) -> String {
        let fmt_s = |s: Option<bool>| match s {
            Some(true) => "pass",
            Some(false) => "fail",
            None => "n/a",
        };
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "index={} distance={} s1={} s2={} s3={} s4={}\n",
                c.index,
                c.distance,
                fmt_s(c.statements[0]),
                fmt_s(c.statements[1]),
                fmt_s(c.statements[2]),
                fmt_s(c.statements[3])
            ));
        }
        out.push_str(&format!(
            "tail_start={} distance_non_increasing={}\n",
            self.tail_start
                .map_or_else(|| "none".to_string(), |i| i.to_string()),
            self.distance_non_increasing
        ));
        out
    }
}

/// Evaluates the window statements along a sequence of monotone profiles
/// approaching `target`. Interior-price auctions have no window, so every
/// index passes vacuously.
pub fn check_sequence(
    spec: &AuctionSpec,
    sequence: &[MixedProfile<f64>],
    target: &NashCertificate<f64>,
    variant: TVariant,
    tol: Tolerances,
) -> Result<SequenceReport> {
    let window = if spec.price_rule().is_extreme() {
        Some(bias_window(spec, variant)?)
    } else {
        None
    };
    spec.check_len(target.profile.n_bids())?;
    let target_stats = ProfileStats::of(spec, &target.profile)?;
    let mut checks = Vec::with_capacity(sequence.len());
    let mut distance_non_increasing = true;
    let mut previous = f64::INFINITY;
    for (index, profile) in sequence.iter().enumerate() {
        let report = is_weakly_payoff_monotone(spec, profile, tol)?;
        if !report.ok {
            return Err(Error::NotMonotone {
                index,
                violations: report.violations.len(),
            });
        }
        let distance = profile.sup_distance(&target.profile);
        if distance > previous {
            distance_non_increasing = false;
        }
        previous = distance;
        let stats = ProfileStats::of(spec, profile)?;
        let statements = match &window {
            None => [None; 4],
            Some(w) => {
                let check = |b: &Bound| b.holds(stats.get(b.quantity));
                let s4 = w.ordering.condition.holds(target_stats.get(w.ordering.condition.quantity));
                [
                    w.side_bound.as_ref().map(check),
                    Some(w.bid_window.iter().all(check)),
                    Some(w.payoff_bounds.iter().all(check)),
                    s4.then(|| {
                        stats.get(Quantity::MeanBid(w.ordering.lower))
                            < stats.get(Quantity::MeanBid(w.ordering.higher))
                    }),
                ]
            }
        };
        checks.push(IndexCheck {
            index,
            distance,
            stats,
            statements,
        });
    }
    let mut report = SequenceReport {
        window,
        checks,
        distance_non_increasing,
        tail_start: None,
    };
    report.tail_start = report.tail_start_for(&[1, 2, 3, 4]);
    Ok(report)
}

pub const PROBE_MAX_BID: u32 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub seed: u64,
    pub target_p: u32,
    pub evaluations: usize,
    /// Sup-norm distance from `profile` to the nearest certified
    /// equilibrium with determinant bid `target_p`.
    pub distance: f64,
    pub profile: MixedProfile<f64>,
    pub monotone: bool,
}

impl fmt::Display for ProbeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "seed={} target_p={} evaluations={} distance={} monotone={}",
            self.seed, self.target_p, self.evaluations, self.distance, self.monotone
        )
    }
}

/// Payoff gaps below this are treated as ties when the probe sorts masses,
/// so every strict ordering it produces survives rounding.
const PROBE_TIE: f64 = 1e-9;

/// Randomized hill climb over weakly payoff monotone profiles toward the
/// equilibria with payoff-determinant bid `target_p`.
///
/// Each step perturbs the current profile (moving mass between two bids or
/// blending toward the nearest target equilibrium), sorts each role's
/// masses into the order of its expected payoffs, and keeps the result if it
/// is monotone and no farther from the target.
pub fn exclusion_probe(
    spec: &AuctionSpec,
    target_p: u32,
    delta: f64,
    budget: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let v = spec.valuations();
    if !(v.c_low()..=v.c_high()).contains(&target_p) {
        return Err(Error::OutsideNashRange {
            bid: target_p,
            low: v.c_low(),
            high: v.c_high(),
        });
    }
    if spec.bids().max_bid() > PROBE_MAX_BID {
        return Err(Error::EnumerationCap {
            size: spec.bids().max_bid(),
            cap: PROBE_MAX_BID,
        });
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "probe step must lie in (0, 1] (got {delta})"
        )));
    }
    let n = spec.n_bids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch = Vec::new();
    let distance_of = |p: &MixedProfile<f64>| -> Result<(f64, Option<MixedProfile<f64>>)> {
        Ok(match equilibrium_near(spec, p, target_p)? {
            Some(eq) => (eq.distance, Some(eq.equilibrium)),
            None => (f64::INFINITY, None),
        })
    };

    let mut evaluations = 0;
    let mut best = MixedProfile::<f64>::uniform(n);
    let (mut best_d, mut best_eq) = distance_of(&best)?;
    let pure = MixedProfile::<f64>::pure(n, target_p, target_p);
    if probe_monotone(spec, &pure, &mut scratch) {
        let (d, eq) = distance_of(&pure)?;
        evaluations += 1;
        if d < best_d {
            (best, best_d, best_eq) = (pure, d, eq);
        }
    }

    while evaluations < budget && best_d > 0.0 {
        evaluations += 1;
        let mut low = best.low().to_vec();
        let mut high = best.high().to_vec();
        let step = delta * 10f64.powf(-3.0 * rng.gen::<f64>());
        match (rng.gen_range(0..3), &best_eq) {
            (0, Some(eq)) => {
                for (own, target) in [(&mut low, eq.low()), (&mut high, eq.high())] {
                    for (a, b) in own.iter_mut().zip(target) {
                        *a += step * (b - *a);
                    }
                }
            }
            _ => {
                let own = if rng.gen::<bool>() { &mut low } else { &mut high };
                let from = rng.gen_range(0..n);
                let to = if rng.gen::<bool>() {
                    target_p as usize
                } else {
                    rng.gen_range(0..n)
                };
                let amount = own[from] * step;
                own[from] -= amount;
                own[to] += amount;
            }
        }
        normalize(&mut low);
        normalize(&mut high);
        let mut candidate = MixedProfile::from_parts(low, high);
        if !sort_into_monotone(spec, &mut candidate, &mut scratch) {
            continue;
        }
        let (d, eq) = distance_of(&candidate)?;
        if d <= best_d {
            (best, best_d, best_eq) = (candidate, d, eq);
        }
    }
    let monotone = is_weakly_payoff_monotone(spec, &best, Tolerances::ZERO)?.ok;
    Ok(ProbeReport {
        seed,
        target_p,
        evaluations,
        distance: best_d,
        profile: best,
        monotone,
    })
}

fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    for w in v.iter_mut() {
        *w = (*w / total).max(0.0);
    }
}

fn probe_monotone(spec: &AuctionSpec, profile: &MixedProfile<f64>, scratch: &mut Vec<f64>) -> bool {
    let tol = Tolerances {
        prob: 0.0,
        payoff: PROBE_TIE,
    };
    Role::BOTH.into_iter().all(|role| {
        spec.expected_payoffs_fast(role, profile.get(role.other()), scratch);
        role_is_monotone(profile.get(role), scratch, tol)
    })
}

/// Alternately reassigns each role's masses in payoff order (equal masses
/// across near-tied payoffs) until both roles are monotone or a round limit
/// is hit.
fn sort_into_monotone(
    spec: &AuctionSpec,
    profile: &mut MixedProfile<f64>,
    scratch: &mut Vec<f64>,
) -> bool {
    for _ in 0..6 {
        if probe_monotone(spec, profile, scratch) {
            return true;
        }
        let (mut low, mut high) = (profile.low().to_vec(), profile.high().to_vec());
        spec.expected_payoffs_fast(Role::Low, &high, scratch);
        rearrange(&mut low, scratch);
        spec.expected_payoffs_fast(Role::High, &low, scratch);
        rearrange(&mut high, scratch);
        *profile = MixedProfile::from_parts(low, high);
    }
    probe_monotone(spec, profile, scratch)
}

fn rearrange(probs: &mut [f64], payoffs: &[f64]) {
    let mut by_payoff: Vec<usize> = (0..probs.len()).collect();
    by_payoff.sort_by(|&a, &b| payoffs[b].total_cmp(&payoffs[a]));
    let mut masses = probs.to_vec();
    masses.sort_by(|a, b| b.total_cmp(a));
    let mut i = 0;
    while i < by_payoff.len() {
        let mut j = i + 1;
        while j < by_payoff.len()
            && payoffs[by_payoff[j - 1]] - payoffs[by_payoff[j]] <= PROBE_TIE
        {
            j += 1;
        }
        let mean = masses[i..j].iter().sum::<f64>() / (j - i) as f64;
        for &b in &by_payoff[i..j] {
            probs[b] = mean;
        }
        i = j;
    }
}
