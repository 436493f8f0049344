//! Scalar types for probabilities and payoffs.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Num, ToPrimitive};

use crate::auction::{AuctionSpec, Role};

/// Exact rational used for every payoff, transfer and bound.
pub type Q = Ratio<i128>;

/// Scalar a probability vector can be expressed in.
///
/// `f64` is used by the logit solver and for data; `Q` gives exact Nash
/// certificates for hand-built profiles.
pub trait Prob: Num + Clone + PartialOrd + Debug + Send + Sync {
    fn from_q(q: Q) -> Self;
    fn to_f64(&self) -> f64;
    /// Slack allowed when checking that a vector sums to one.
    fn sum_slack() -> f64;

    /// Expected payoff of every bid of `role` against `opponent`.
    fn payoff_vector(spec: &AuctionSpec, role: Role, opponent: &[Self]) -> Vec<Self> {
        spec.payoff_matrix(role).apply(opponent)
    }
}

impl Prob for f64 {
    fn from_q(q: Q) -> Self {
        q_to_f64(q)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn sum_slack() -> f64 {
        1e-12
    }

    fn payoff_vector(spec: &AuctionSpec, role: Role, opponent: &[Self]) -> Vec<Self> {
        let mut out = Vec::with_capacity(opponent.len());
        spec.expected_payoffs_fast(role, opponent, &mut out);
        out
    }
}

impl Prob for Q {
    fn from_q(q: Q) -> Self {
        q
    }

    fn to_f64(&self) -> f64 {
        q_to_f64(*self)
    }

    fn sum_slack() -> f64 {
        0.0
    }
}

pub fn q(n: i128, d: i128) -> Q {
    Ratio::new(n, d)
}

pub fn qi(n: i128) -> Q {
    Ratio::from_integer(n)
}

pub fn q_to_f64(x: Q) -> f64 {
    ToPrimitive::to_f64(&x).unwrap_or(f64::NAN)
}

/// Parses `"1"`, `"1/2"`, `"0.5"` or `"17.25"` into an exact rational.
pub fn parse_q(s: &str) -> Option<Q> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: i128 = n.trim().parse().ok()?;
        let d: i128 = d.trim().parse().ok()?;
        if d == 0 {
            return None;
        }
        return Some(Ratio::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 30 {
            return None;
        }
        let negative = int.starts_with('-');
        let int_val: i128 = if int.is_empty() || int == "-" {
            0
        } else {
            int.parse().ok()?
        };
        let scale = 10i128.checked_pow(frac.len() as u32)?;
        let frac_val: i128 = frac.parse().ok()?;
        let magnitude = int_val.abs() * scale + frac_val;
        let signed = if negative { -magnitude } else { magnitude };
        return Some(Ratio::new(signed, scale));
    }
    s.parse::<i128>().ok().map(Ratio::from_integer)
}

/// Formats a rational as a terminating decimal when possible, `n/d` otherwise.
pub fn format_q(x: Q) -> String {
    let x = x.reduced();
    let (n, d) = (*x.numer(), *x.denom());
    if d == 1 {
        return n.to_string();
    }
    let mut rest = d;
    let mut digits = 0u32;
    let (mut twos, mut fives) = (0u32, 0u32);
    while rest % 2 == 0 {
        rest /= 2;
        twos += 1;
    }
    while rest % 5 == 0 {
        rest /= 5;
        fives += 1;
    }
    if rest != 1 {
        return format!("{n}/{d}");
    }
    digits += twos.max(fives);
    let scale = 10i128.pow(digits);
    let scaled = n * (scale / d);
    let sign = if scaled < 0 { "-" } else { "" };
    let abs = scaled.abs();
    let int = abs / scale;
    let frac = abs % scale;
    format!("{sign}{int}.{frac:0width$}", width = digits as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        assert_eq!(parse_q("1/2"), Some(q(1, 2)));
        assert_eq!(parse_q("0.5"), Some(q(1, 2)));
        assert_eq!(parse_q("17.25"), Some(q(69, 4)));
        assert_eq!(parse_q("-2.5"), Some(q(-5, 2)));
        assert_eq!(parse_q("-0.5"), Some(q(-1, 2)));
        assert_eq!(parse_q("3"), Some(qi(3)));
        assert_eq!(parse_q("1/0"), None);
        assert_eq!(parse_q("x"), None);
        assert_eq!(format_q(q(35, 2)), "17.5");
        assert_eq!(format_q(q(-1, 2)), "-0.5");
        assert_eq!(format_q(q(1, 3)), "1/3");
        assert_eq!(format_q(q(193, 4)), "48.25");
        assert_eq!(format_q(qi(-7)), "-7");
    }
}
