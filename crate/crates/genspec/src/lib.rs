//! Safe query-specialization for counterfactual learning to rank.
//!
//! The library simulates biased click logs under a position-based user
//! model, trains generalized (feature-based linear) and specialized
//! (tabular) ranking policies with inverse-propensity-scored objectives, and
//! deploys the better policy per query only when a high-confidence bound on
//! the relative performance difference certifies the switch. A CLI harness
//! sweeps click budgets over seeded repeats and reports NDCG curves as CSV.

pub mod baselines;
pub mod contextual;
pub mod data;
pub mod error;
pub mod estimate;
pub mod genspec;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod policy;
pub mod ranking;
pub mod simulate;

pub use error::{Error, Result};
