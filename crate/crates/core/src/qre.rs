//! Logit quantal-response equilibria: the logit map, a damped fixed-point
//! solver, λ-continuation sweeps and the efficiency summaries plotted
//! against λ.

use std::fmt::Write as _;
use std::io;

use nalgebra::{DMatrix, DVector};

use crate::auction::{AuctionSpec, MixedProfile, Role};
use crate::error::{Error, Result};
use crate::prob::{format_q, q_to_f64};

/// `σ(b) ∝ exp(λ·U(b | opponent))`, shifted by the maximum payoff.
pub fn logit_response(
    spec: &AuctionSpec,
    role: Role,
    opponent: &[f64],
    lambda: f64,
) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    spec.check_len(opponent.len())?;
    let mut payoffs = Vec::new();
    spec.expected_payoffs_fast(role, opponent, &mut payoffs);
    let mut out = Vec::new();
    softmax_into(&payoffs, lambda, &mut out);
    Ok(out)
}

/// Softmax of `lambda * payoffs`, written into `out`.
pub fn softmax_into(payoffs: &[f64], lambda: f64, out: &mut Vec<f64>) {
    out.clear();
    if lambda == 0.0 {
        let w = 1.0 / payoffs.len() as f64;
        out.resize(payoffs.len(), w);
        return;
    }
    let top = payoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for &u in payoffs {
        let w = (lambda * (u - top)).exp();
        total += w;
        out.push(w);
    }
    for w in out.iter_mut() {
        *w /= total;
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be finite and non-negative (got {lambda})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Initial weight on the logit response in `σ ← (1−d)σ + d·L(σ)`.
    pub damping: f64,
    /// Sup-norm fixed-point gap at which the solver stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Halve the damping whenever the residual grows.
    pub adaptive: bool,
    pub min_damping: f64,
    /// Refine a converged point with Newton steps and give near-tied bids
    /// identical probabilities, so the returned profile is ordered exactly
    /// like its expected payoffs.
    pub polish: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-10,
            max_iter: 100_000,
            adaptive: true,
            min_damping: 1e-3,
            polish: true,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "damping must lie in (0, 1] (got {})",
                self.damping
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive (got {})",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QrePoint {
    pub lambda: f64,
    pub profile: MixedProfile<f64>,
    /// Sup-norm distance between `profile` and its joint logit response.
    pub residual: f64,
    /// Number of joint logit-response evaluations.
    pub iterations: usize,
}

struct Workspace {
    payoffs: Vec<f64>,
    response: [Vec<f64>; 2],
}

impl Workspace {
    fn new() -> Self {
        Self {
            payoffs: Vec::new(),
            response: [Vec::new(), Vec::new()],
        }
    }

    /// Joint logit response of `(low, high)`; returns the sup-norm gap.
    fn respond(&mut self, spec: &AuctionSpec, lambda: f64, low: &[f64], high: &[f64]) -> f64 {
        let mut gap: f64 = 0.0;
        for (i, (role, own, opp)) in [(Role::Low, low, high), (Role::High, high, low)]
            .into_iter()
            .enumerate()
        {
            spec.expected_payoffs_fast(role, opp, &mut self.payoffs);
            softmax_into(&self.payoffs, lambda, &mut self.response[i]);
            for (a, b) in own.iter().zip(&self.response[i]) {
                gap = gap.max((a - b).abs());
            }
        }
        gap
    }
}

/// Sup-norm gap between a profile and its joint logit response.
pub fn fixed_point_residual(
    spec: &AuctionSpec,
    lambda: f64,
    profile: &MixedProfile<f64>,
) -> Result<f64> {
    check_lambda(lambda)?;
    spec.check_len(profile.n_bids())?;
    Ok(Workspace::new().respond(spec, lambda, profile.low(), profile.high()))
}

/// Newton refinement of the fixed point `x = L(x)` over both roles.
struct Newton {
    /// Payoff matrices indexed `(own bid, opponent bid)`, low then high.
    payoffs: [DMatrix<f64>; 2],
}

impl Newton {
    fn new(spec: &AuctionSpec) -> Self {
        let n = spec.n_bids();
        let table = |role| {
            let m = spec.payoff_matrix(role).to_f64();
            DMatrix::from_row_slice(n, n, &m)
        };
        Self {
            payoffs: [table(Role::Low), table(Role::High)],
        }
    }

    /// Up to `steps` backtracking Newton steps; returns the final residual.
    fn refine(
        &self,
        spec: &AuctionSpec,
        lambda: f64,
        ws: &mut Workspace,
        low: &mut Vec<f64>,
        high: &mut Vec<f64>,
        tol: f64,
        steps: usize,
    ) -> f64 {
        let n = low.len();
        let mut residual = ws.respond(spec, lambda, low, high);
        for _ in 0..steps {
            if residual <= tol {
                break;
            }
            let mut jac = DMatrix::<f64>::identity(2 * n, 2 * n);
            for (i, (row0, col0)) in [(0, n), (n, 0)].into_iter().enumerate() {
                let s = &ws.response[i];
                let a = &self.payoffs[i];
                // λ (diag(s) − s sᵀ) A
                let mean_row: Vec<f64> = (0..n)
                    .map(|r| (0..n).map(|b| s[b] * a[(b, r)]).sum())
                    .collect();
                for b in 0..n {
                    for r in 0..n {
                        jac[(row0 + b, col0 + r)] = -lambda * s[b] * (a[(b, r)] - mean_row[r]);
                    }
                }
            }
            let f = DVector::from_iterator(
                2 * n,
                low.iter()
                    .zip(&ws.response[0])
                    .chain(high.iter().zip(&ws.response[1]))
                    .map(|(x, l)| x - l),
            );
            let Some(delta) = jac.lu().solve(&f) else {
                break;
            };
            let mut improved = false;
            let mut t = 1.0;
            for _ in 0..12 {
                let mut cand_low: Vec<f64> = (0..n).map(|b| low[b] - t * delta[b]).collect();
                let mut cand_high: Vec<f64> = (0..n).map(|b| high[b] - t * delta[n + b]).collect();
                if clamp_normalize(&mut cand_low) && clamp_normalize(&mut cand_high) {
                    let r = ws.respond(spec, lambda, &cand_low, &cand_high);
                    if r < residual {
                        *low = cand_low;
                        *high = cand_high;
                        residual = r;
                        improved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        // Leave the workspace holding the response to the final iterate.
        ws.respond(spec, lambda, low, high)
    }
}

/// Clips rounding-level negatives and renormalizes; rejects real negatives.
fn clamp_normalize(v: &mut [f64]) -> bool {
    if v.iter().any(|w| *w < -1e-9 || !w.is_finite()) {
        return false;
    }
    let mut total = 0.0;
    for w in v.iter_mut() {
        *w = w.max(0.0);
        total += *w;
    }
    if total <= 0.0 {
        return false;
    }
    for w in v.iter_mut() {
        *w /= total;
    }
    true
}

/// Damped iterations between Newton attempts once damping has bottomed out.
const NEWTON_EVERY: usize = 5_000;
const NEWTON_STEPS: usize = 30;

/// Damped fixed-point iteration from `init`, with Newton refinement when
/// the damped map stalls.
///
/// On success the returned profile is the joint logit response of the
/// final iterate, so each role's distribution is an exact softmax image.
pub fn solve_qre(
    spec: &AuctionSpec,
    lambda: f64,
    init: &MixedProfile<f64>,
    opts: &SolverOptions,
) -> Result<QrePoint> {
    solve_with(spec, lambda, init, opts, &mut None)
}

fn solve_with(
    spec: &AuctionSpec,
    lambda: f64,
    init: &MixedProfile<f64>,
    opts: &SolverOptions,
    newton: &mut Option<Newton>,
) -> Result<QrePoint> {
    check_lambda(lambda)?;
    opts.validate()?;
    spec.check_len(init.n_bids())?;
    let mut low = init.low().to_vec();
    let mut high = init.high().to_vec();
    let mut ws = Workspace::new();
    let mut damping = opts.damping;
    let mut previous = f64::INFINITY;
    let mut residual = f64::INFINITY;
    let mut floor_since = None;
    for iteration in 1..=opts.max_iter {
        residual = ws.respond(spec, lambda, &low, &high);
        let stalled = floor_since.is_some_and(|k| (iteration - k) % NEWTON_EVERY == 0);
        if residual > opts.tol && (stalled || iteration == opts.max_iter) {
            let solver = newton.get_or_insert_with(|| Newton::new(spec));
            let (mut nl, mut nh) = (low.clone(), high.clone());
            let r = solver.refine(spec, lambda, &mut ws, &mut nl, &mut nh, opts.tol, NEWTON_STEPS);
            if r <= opts.tol {
                (low, high, residual) = (nl, nh, r);
            } else {
                ws.respond(spec, lambda, &low, &high);
            }
        }
        if residual <= opts.tol {
            return finish(spec, lambda, &mut ws, low, high, residual, iteration, opts, newton);
        }
        if opts.adaptive && residual > previous {
            damping = (damping * 0.5).max(opts.min_damping);
            if damping <= opts.min_damping && floor_since.is_none() {
                floor_since = Some(iteration);
            }
        }
        previous = residual;
        for (own, resp) in [(&mut low, &ws.response[0]), (&mut high, &ws.response[1])] {
            for (a, b) in own.iter_mut().zip(resp) {
                *a = (1.0 - damping) * *a + damping * b;
            }
        }
    }
    Err(Error::NoConvergence {
        lambda,
        iterations: opts.max_iter,
        residual,
    })
}

/// Payoff gaps below this fraction of the payoff scale count as ties when
/// a converged point is polished.
const TIE_RELATIVE: f64 = 1e-13;

/// Turns a converged iterate into the returned point: optionally refines it,
/// then replaces it by its joint logit response when that keeps the
/// residual within tolerance.
#[allow(clippy::too_many_arguments)]
fn finish(
    spec: &AuctionSpec,
    lambda: f64,
    ws: &mut Workspace,
    mut low: Vec<f64>,
    mut high: Vec<f64>,
    mut residual: f64,
    iterations: usize,
    opts: &SolverOptions,
    newton: &mut Option<Newton>,
) -> Result<QrePoint> {
    if opts.polish && lambda > 0.0 && residual > 0.0 {
        let solver = newton.get_or_insert_with(|| Newton::new(spec));
        let (mut nl, mut nh) = (low.clone(), high.clone());
        let r = solver.refine(spec, lambda, ws, &mut nl, &mut nh, 0.0, 4);
        if r <= residual {
            (low, high, residual) = (nl, nh, r);
        } else {
            ws.respond(spec, lambda, &low, &high);
        }
    }
    let mut image = [ws.response[0].clone(), ws.response[1].clone()];
    if opts.polish {
        for (i, (role, opp)) in [(Role::Low, &high), (Role::High, &low)].into_iter().enumerate() {
            spec.expected_payoffs_fast(role, opp, &mut ws.payoffs);
            equalize_ties(&mut image[i], &ws.payoffs);
        }
    }
    let [img_low, img_high] = image;
    let img_residual = ws.respond(spec, lambda, &img_low, &img_high);
    let (low, high, residual) = if img_residual <= opts.tol {
        (img_low, img_high, img_residual)
    } else {
        (low, high, residual)
    };
    Ok(QrePoint {
        lambda,
        profile: MixedProfile::new(low, high)?,
        residual,
        iterations,
    })
}

/// Averages the probabilities of bids whose payoffs differ by less than the
/// tie threshold.
fn equalize_ties(probs: &mut [f64], payoffs: &[f64]) {
    let scale = payoffs.iter().fold(1.0f64, |m, u| m.max(u.abs()));
    let eps = TIE_RELATIVE * scale;
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| payoffs[b].total_cmp(&payoffs[a]));
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && payoffs[order[j - 1]] - payoffs[order[j]] <= eps {
            j += 1;
        }
        if j - i > 1 {
            let mean = order[i..j].iter().map(|&b| probs[b]).sum::<f64>() / (j - i) as f64;
            for &b in &order[i..j] {
                probs[b] = mean;
            }
        }
        i = j;
    }
}

/// `100·P(HV wins)`: strict wins plus ties weighted by `γ`.
pub fn efficiency(spec: &AuctionSpec, profile: &MixedProfile<f64>) -> Result<f64> {
    spec.check_len(profile.n_bids())?;
    let gamma = q_to_f64(spec.gamma());
    let mut below_low = 0.0;
    let mut total = 0.0;
    for (&wl, &wh) in profile.low().iter().zip(profile.high()) {
        total += wh * (below_low + gamma * wl);
        below_low += wl;
    }
    Ok(100.0 * total)
}

/// Expected payoffs `(π_l, π_h)` of a floating-point profile.
pub fn payoffs_f64(spec: &AuctionSpec, profile: &MixedProfile<f64>) -> Result<(f64, f64)> {
    spec.check_len(profile.n_bids())?;
    let mut buf = Vec::new();
    let mut out = [0.0; 2];
    for (i, role) in Role::BOTH.into_iter().enumerate() {
        spec.expected_payoffs_fast(role, profile.get(role.other()), &mut buf);
        out[i] = buf.iter().zip(profile.get(role)).map(|(u, w)| u * w).sum();
    }
    Ok((out[0], out[1]))
}

/// One row of a sweep in standardized units.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub efficiency_pct: f64,
    /// `(E[b] − c_l)/ES`, indexed low then high.
    pub mean_std_bid: [f64; 2],
    /// `(π_i − c_i)/ES`, indexed low then high.
    pub std_payoff: [f64; 2],
    pub iterations: usize,
    pub residual: f64,
}

pub fn summarize(spec: &AuctionSpec, point: &QrePoint) -> Result<SweepRow> {
    let v = spec.valuations();
    let es = v.equity_surplus() as f64;
    let (cl, ch) = (v.c_low() as f64, v.c_high() as f64);
    let (pl, ph) = payoffs_f64(spec, &point.profile)?;
    let bid = |role| (point.profile.expected_bid(role) - cl) / es;
    Ok(SweepRow {
        lambda: point.lambda,
        efficiency_pct: efficiency(spec, &point.profile)?,
        mean_std_bid: [bid(Role::Low), bid(Role::High)],
        std_payoff: [(pl - cl) / es, (ph - ch) / es],
        iterations: point.iterations,
        residual: point.residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub spec: AuctionSpec,
    pub rows: Vec<SweepRow>,
    pub points: Vec<QrePoint>,
}

pub const SWEEP_CSV_HEADER: &str = "auction,alpha,gamma,v_l,v_h,p_max,lambda,efficiency_pct,mean_std_bid_lv,mean_std_bid_hv,std_payoff_lv,std_payoff_hv,iterations,residual";

impl SweepCurve {
    pub fn row_at(&self, lambda: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| (r.lambda - lambda).abs() < 1e-9)
    }

    /// CSV body rows without the header.
    pub fn csv_rows(&self) -> String {
        let s = &self.spec;
        let v = s.valuations();
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                s.label(),
                format_q(s.alpha()),
                format_q(s.gamma()),
                v.low(),
                v.high(),
                s.bids().max_bid(),
                r.lambda,
                r.efficiency_pct,
                r.mean_std_bid[0],
                r.mean_std_bid[1],
                r.std_payoff[0],
                r.std_payoff[1],
                r.iterations,
                r.residual
            );
        }
        out
    }

    pub fn write_csv<W: io::Write>(curves: &[SweepCurve], mut w: W) -> io::Result<()> {
        writeln!(w, "{SWEEP_CSV_HEADER}")?;
        for c in curves {
            w.write_all(c.csv_rows().as_bytes())?;
        }
        Ok(())
    }
}

/// Solves every λ in `grid`. With `continuation`, each solve starts from
/// the previous λ's profile; otherwise every solve starts from uniform.
pub fn sweep(
    spec: &AuctionSpec,
    grid: &[f64],
    continuation: bool,
    opts: &SolverOptions,
) -> Result<SweepCurve> {
    validate_grid(grid)?;
    let uniform = MixedProfile::<f64>::uniform(spec.n_bids());
    let mut points: Vec<QrePoint> = Vec::with_capacity(grid.len());
    let mut rows = Vec::with_capacity(grid.len());
    let mut newton = None;
    for &lambda in grid {
        let init = match points.last() {
            Some(prev) if continuation => &prev.profile,
            _ => &uniform,
        };
        let point = solve_with(spec, lambda, init, opts, &mut newton)?;
        rows.push(summarize(spec, &point)?);
        points.push(point);
    }
    Ok(SweepCurve {
        spec: spec.clone(),
        rows,
        points,
    })
}

/// Principal-branch QRE at a single λ, reached by continuation from the
/// uniform profile at λ = 0 in steps of at most `step`.
pub fn principal_qre(
    spec: &AuctionSpec,
    lambda: f64,
    step: f64,
    opts: &SolverOptions,
) -> Result<QrePoint> {
    check_lambda(lambda)?;
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("continuation step must be positive".into()));
    }
    let steps = (lambda / step).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..=steps)
        .map(|i| lambda * i as f64 / steps as f64)
        .collect();
    let curve = sweep(spec, &grid, true, opts)?;
    Ok(curve.points.into_iter().last().expect("grid is never empty"))
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    match grid.first() {
        None => return Err(Error::InvalidParameter("empty lambda grid".into())),
        Some(&first) if first != 0.0 => {
            return Err(Error::InvalidParameter(format!(
                "lambda grid must start at 0 (got {first})"
            )))
        }
        _ => {}
    }
    for w in grid.windows(2) {
        if !(w[1] > w[0]) || !w[1].is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda grid must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Parses `start:step:end` (inclusive end) or a comma-separated list.
pub fn parse_lambda_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidParameter(format!("malformed lambda grid {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [start, step, end] => {
            let start: f64 = start.trim().parse().map_err(|_| bad())?;
            let step: f64 = step.trim().parse().map_err(|_| bad())?;
            let end: f64 = end.trim().parse().map_err(|_| bad())?;
            if !(step > 0.0) || end < start {
                return Err(bad());
            }
            let n = ((end - start) / step + 1e-9).floor() as usize;
            (0..=n)
                .map(|i| round12(start + i as f64 * step))
                .collect()
        }
        [_] => s
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?,
        _ => return Err(bad()),
    };
    if grid.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(bad());
    }
    Ok(grid)
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}
