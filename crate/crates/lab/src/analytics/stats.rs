//! Sign and permutation tests.

use alpha_core::prob::q;
use alpha_core::Q;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One-sided `P(X ≥ positive)` for `X ~ Binomial(n, 1/2)`; 1 when `n = 0`.
pub fn sign_test(positive: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    // pmf(k) computed in log space so large n stays finite.
    let ln_choose = |k: usize| -> f64 {
        (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
    };
    let half_n = n as f64 * std::f64::consts::LN_2;
    (positive..=n)
        .map(|k| (ln_choose(k) - half_n).exp())
        .sum::<f64>()
        .min(1.0)
}

/// Label permutations enumerated exactly up to this many joint orderings.
pub const EXACT_LIMIT: u128 = 1_000_000;
pub const MONTE_CARLO_DRAWS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationResult {
    pub observed: f64,
    /// Share of orderings at least as extreme as the observed one; with
    /// Monte Carlo, `(1 + hits) / (1 + draws)`.
    pub p_value: Q,
    pub exact: bool,
    pub orderings: u128,
}

/// Permutation test in which the labels within each group are exchangeable
/// under the null. `statistic` sees one permuted copy of all groups; larger
/// is more extreme.
pub fn permutation_test(groups: &[Vec<f64>], statistic: impl Fn(&[Vec<f64>]) -> f64, seed: u64) -> PermutationResult {
    let observed = statistic(groups);
    let space = groups
        .iter()
        .try_fold(1u128, |acc, g| acc.checked_mul(factorial(g.len())?));
    match space {
        Some(total) if total <= EXACT_LIMIT => {
            let perms: Vec<Vec<Vec<f64>>> = groups.iter().map(|g| permutations(g)).collect();
            let mut idx = vec![0usize; groups.len()];
            let mut current: Vec<Vec<f64>> = perms.iter().map(|p| p[0].clone()).collect();
            let mut hits: u128 = 0;
            loop {
                if statistic(&current) >= observed {
                    hits += 1;
                }
                let mut g = 0;
                loop {
                    if g == groups.len() {
                        return PermutationResult {
                            observed,
                            p_value: q(hits as i128, total as i128),
                            exact: true,
                            orderings: total,
                        };
                    }
                    idx[g] += 1;
                    if idx[g] < perms[g].len() {
                        current[g].clone_from(&perms[g][idx[g]]);
                        break;
                    }
                    idx[g] = 0;
                    current[g].clone_from(&perms[g][0]);
                    g += 1;
                }
            }
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut current = groups.to_vec();
            let mut hits = 0usize;
            for _ in 0..MONTE_CARLO_DRAWS {
                for g in current.iter_mut() {
                    g.shuffle(&mut rng);
                }
                if statistic(&current) >= observed {
                    hits += 1;
                }
            }
            PermutationResult {
                observed,
                p_value: q(1 + hits as i128, 1 + MONTE_CARLO_DRAWS as i128),
                exact: false,
                orderings: space.unwrap_or(u128::MAX),
            }
        }
    }
}

fn factorial(n: usize) -> Option<u128> {
    (1..=n as u128).try_fold(1u128, |acc, k| acc.checked_mul(k))
}

/// All orderings of `xs` by position, in lexicographic index order.
fn permutations(xs: &[f64]) -> Vec<Vec<f64>> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    let mut out = vec![idx.iter().map(|&i| xs[i]).collect::<Vec<f64>>()];
    // Next lexicographic permutation of the index vector.
    loop {
        let Some(i) = (1..idx.len()).rev().find(|&i| idx[i - 1] < idx[i]) else {
            return out;
        };
        let j = (i..idx.len()).rev().find(|&j| idx[j] > idx[i - 1]).expect("pivot exists");
        idx.swap(i - 1, j);
        idx[i..].reverse();
        out.push(idx.iter().map(|&k| xs[k]).collect());
    }
}

/// Number of groups whose values strictly increase in label order.
pub fn ordered_groups(groups: &[Vec<f64>]) -> f64 {
    groups
        .iter()
        .filter(|g| g.windows(2).all(|w| w[0] < w[1]))
        .count() as f64
}
