//! Standardized metrics, empirical payoff fields, and the tests and
//! regressions run on session logs. Everything here reads the canonical CSV
//! rows only.

pub mod clogit;
pub mod field;
pub mod standardize;
pub mod stats;
pub mod summary;

pub use clogit::{choice_sets, fit, CLogitFit, ChoiceSet, Covariates, FitOptions};
pub use field::{
    empirical_payoff_field, played_vs_unplayed, ventile_histogram, HistogramRow, PayoffField,
    PlayedVsUnplayed, UnitLevel,
};
pub use standardize::{standardize, StandardizedMetrics};
pub use stats::{ordered_groups, permutation_test, sign_test, PermutationResult};
pub use summary::{summary_table, SummaryRow};
