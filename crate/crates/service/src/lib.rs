//! Command-line tools and the live-session service for α-auction
//! experiments.

pub mod cli;
pub mod error;
pub mod hub;
pub mod server;
pub mod wire;

pub use error::{Result, ServiceError};
