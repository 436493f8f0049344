//! Complete-information α-auctions for dissolving a two-agent partnership.
//!
//! The crate covers the game itself ([`auction`]), Nash analysis
//! ([`equilibrium`]), logit quantal-response equilibria ([`qre`]), and the
//! weak payoff monotonicity checks and bias windows that characterize which
//! Nash equilibria can be approached by empirically plausible behavior
//! ([`empirical`]).
//!
//! All payoff arithmetic is exact (`Ratio<i128>`); floating point is used only
//! for probability vectors produced by the logit solver.

pub mod auction;
pub mod empirical;
pub mod equilibrium;
pub mod error;
pub mod prob;
pub mod qre;

pub use auction::{
    AuctionSpec, BidDomain, Constants, MixedProfile, Outcome, PayoffMatrix, PriceRule, Resolution,
    Role, ValuationPair,
};
pub use error::{Error, Result};
pub use prob::{Prob, Q};
