use thiserror::Error;

use crate::auction::Role;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("valuations must be even, positive and strictly ordered (got v_l={low}, v_h={high})")]
    InvalidValuations { low: u32, high: u32 },

    #[error("bid domain {{0,…,{max_bid}}} does not reach v_h/2 = {half_high}")]
    DomainTooSmall { max_bid: u32, half_high: u32 },

    #[error("{name} must lie in [0, 1] (got {value})")]
    OutOfUnitInterval { name: &'static str, value: String },

    #[error("bid {bid} out of range 0..={max_bid}")]
    BidOutOfDomain { bid: i64, max_bid: u32 },

    #[error("distribution length {got} does not match bid domain size {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("{role} distribution is not a probability vector: {reason}")]
    InvalidDistribution { role: Role, reason: String },

    #[error("bid {bid} is outside the Nash range {low}..={high}")]
    OutsideNashRange { bid: u32, low: u32, high: u32 },

    #[error("operation requires {required} (alpha = {alpha})")]
    UnsupportedAuction { required: &'static str, alpha: String },

    #[error("enumeration over {size} bids exceeds the cap of {cap}")]
    EnumerationCap { size: u32, cap: u32 },

    #[error("invalid solver parameter: {0}")]
    InvalidParameter(String),

    #[error("logit solver did not converge at lambda={lambda} after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        lambda: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("sequence member {index} is not weakly payoff monotone ({violations} violations)")]
    NotMonotone { index: usize, violations: usize },
}
