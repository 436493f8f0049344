//! Laboratory sessions for α-auctions: the experiment protocol with bot or
//! externally driven seats, the canonical CSV log, and the analytics run on
//! it.

pub mod actor;
pub mod analytics;
pub mod bots;
pub mod csvlog;
pub mod error;
pub mod protocol;
mod qser;
pub mod schedule;
pub mod session;

pub use error::{LabError, Result};
