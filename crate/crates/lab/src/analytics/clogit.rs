//! Conditional logit over full bid menus, fitted by damped Newton steps.

use std::fmt::Write as _;

use alpha_core::prob::{q_to_f64, qi};
use nalgebra::{DMatrix, DVector};

use super::field::periods;
use super::standardize::role_index;
use crate::csvlog::SessionRow;
use crate::error::Result;

/// One decision: alternatives in rows of `x` (row-major, `k` columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceSet {
    pub x: Vec<f64>,
    pub chosen: usize,
}

impl ChoiceSet {
    pub fn n_alternatives(&self, k: usize) -> usize {
        self.x.len() / k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Convergence when the score's norm in the inverse-information metric,
    /// `sqrt(gᵀ I⁻¹ g)`, is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest `|β_j| · max|x_j|` before the fit is declared separated.
    pub utility_cap: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 100,
            utility_cap: 700.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CLogitFit {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    /// Observed-information standard errors (not clustered).
    pub std_errors: Option<Vec<f64>>,
    pub log_likelihood: f64,
    pub log_likelihood_zero: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Some coefficient diverged: the covariates predict choices perfectly
    /// or nearly so. `beta` is the last iterate.
    pub separated: bool,
    /// `sqrt(gᵀ I⁻¹ g)` at the last evaluated point.
    pub gradient_norm: f64,
    pub n_choices: usize,
}

impl CLogitFit {
    /// `key=value` lines.
    pub fn report(&self) -> String {
        let mut s = String::new();
        for (i, name) in self.names.iter().enumerate() {
            let _ = writeln!(s, "beta.{name}={}", self.beta[i]);
            if let Some(se) = &self.std_errors {
                let _ = writeln!(s, "se_observed_information.{name}={}", se[i]);
            }
        }
        let _ = writeln!(s, "log_likelihood={}", self.log_likelihood);
        let _ = writeln!(s, "log_likelihood_at_zero={}", self.log_likelihood_zero);
        let _ = writeln!(s, "n_choices={}", self.n_choices);
        let _ = writeln!(s, "iterations={}", self.iterations);
        let _ = writeln!(s, "converged={}", self.converged);
        let _ = writeln!(s, "separated={}", self.separated);
        let _ = writeln!(s, "gradient_norm={}", self.gradient_norm);
        s
    }
}

struct Eval {
    ll: f64,
    grad: DVector<f64>,
    info: DMatrix<f64>,
}

fn evaluate(data: &[ChoiceSet], k: usize, beta: &DVector<f64>, with_info: bool) -> Eval {
    let mut ll = 0.0;
    let mut grad = DVector::zeros(k);
    let mut info = DMatrix::zeros(k, k);
    let mut u = Vec::new();
    let mut mean = DVector::zeros(k);
    for c in data {
        let n = c.n_alternatives(k);
        u.clear();
        u.extend((0..n).map(|j| (0..k).map(|m| c.x[j * k + m] * beta[m]).sum::<f64>()));
        let top = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in u.iter_mut() {
            *v = (*v - top).exp();
            total += *v;
        }
        ll += (u[c.chosen] / total).ln();
        mean.fill(0.0);
        for j in 0..n {
            let p = u[j] / total;
            for m in 0..k {
                mean[m] += p * c.x[j * k + m];
            }
        }
        for m in 0..k {
            grad[m] += c.x[c.chosen * k + m] - mean[m];
        }
        if with_info {
            for j in 0..n {
                let p = u[j] / total;
                for a in 0..k {
                    let da = c.x[j * k + a] - mean[a];
                    for b in 0..k {
                        info[(a, b)] += p * da * (c.x[j * k + b] - mean[b]);
                    }
                }
            }
        }
    }
    Eval { ll, grad, info }
}

const SEPARATION_LL: f64 = 1e-6;
const MAX_HALVINGS: usize = 40;

/// Maximum-likelihood fit. `names` labels the `k` covariate columns.
pub fn fit(data: &[ChoiceSet], names: &[&str], opts: FitOptions) -> CLogitFit {
    let k = names.len();
    let n_choices = data.len().max(1) as f64;
    let scale: Vec<f64> = (0..k)
        .map(|m| {
            data.iter()
                .flat_map(|c| c.x.iter().skip(m).step_by(k))
                .fold(0.0f64, |a, x| a.max(x.abs()))
        })
        .collect();
    let mut beta = DVector::zeros(k);
    let mut cur = evaluate(data, k, &beta, true);
    let ll_zero = cur.ll;
    let mut iterations = 0;
    let mut converged = false;
    let mut separated = false;
    let mut norm = f64::INFINITY;
    while iterations < opts.max_iter {
        let Some(step) = solve(&cur.info, &cur.grad) else {
            separated = true;
            break;
        };
        norm = cur.grad.dot(&step).max(0.0).sqrt();
        if norm <= opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = &beta + &step * t;
            let e = evaluate(data, k, &trial, false);
            if e.ll >= cur.ll {
                accepted = Some(trial);
                break;
            }
            t *= 0.5;
        }
        let Some(b) = accepted else { break };
        beta = b;
        cur = evaluate(data, k, &beta, true);
        if cur.ll > -SEPARATION_LL * n_choices || (0..k).any(|m| beta[m].abs() * scale[m] > opts.utility_cap) {
            separated = true;
            break;
        }
    }
    if separated {
        converged = false;
    }
    let std_errors = if separated {
        None
    } else {
        cur.info
            .clone()
            .try_inverse()
            .map(|inv| (0..k).map(|m| inv[(m, m)].max(0.0).sqrt()).collect())
    };
    CLogitFit {
        names: names.iter().map(|s| s.to_string()).collect(),
        beta: beta.iter().copied().collect(),
        std_errors,
        log_likelihood: cur.ll,
        log_likelihood_zero: ll_zero,
        iterations,
        converged,
        separated,
        gradient_norm: norm,
        n_choices: data.len(),
    }
}

fn solve(info: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = info.clone().cholesky() {
        return Some(ch.solve(grad));
    }
    let lu = info.clone().lu();
    lu.solve(grad).filter(|s| s.iter().all(|x| x.is_finite()))
}

/// Covariates built from a session log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Covariates {
    /// Expected payoff × period.
    pub period_interaction: bool,
    /// Indicators for bids divisible by 5 and by 10.
    pub round_numbers: bool,
}

impl Covariates {
    pub fn names(&self) -> Vec<&'static str> {
        let mut n = vec!["expected_payoff"];
        if self.period_interaction {
            n.push("expected_payoff_x_period");
        }
        if self.round_numbers {
            n.extend(["round5", "round10"]);
        }
        n
    }
}

/// One choice set per subject-period over the full bid domain, with the
/// period's empirical expected payoff in raw points.
pub fn choice_sets(rows: &[SessionRow], cov: Covariates) -> Result<Vec<ChoiceSet>> {
    let k = cov.names().len();
    let mut out = Vec::new();
    for (field, rs) in periods(rows)? {
        for r in rs {
            let payoffs = &field.payoffs[role_index(r.role)];
            let mut x = Vec::with_capacity(payoffs.len() * k);
            for (b, u) in payoffs.iter().enumerate() {
                let u = q_to_f64(*u + qi(r.item_a as i128));
                x.push(u);
                if cov.period_interaction {
                    x.push(u * r.period as f64);
                }
                if cov.round_numbers {
                    x.push((b % 5 == 0) as u8 as f64);
                    x.push((b % 10 == 0) as u8 as f64);
                }
            }
            out.push(ChoiceSet {
                x,
                chosen: r.bid as usize,
            });
        }
    }
    Ok(out)
}
