//! Longitudinal modified treatment policies over panel data.
//!
//! The crate covers the full pipeline: validated panel data and history
//! views ([`panel`]), executable intervention policies ([`policy`]), nuisance
//! learners with cross-fitting and stacking ([`learners`]), density ratios by
//! the duplicated-data classification trick ([`ratio`]), the g-computation,
//! IPW, TMLE and SDR estimators with influence-based inference
//! ([`estimators`]), and known data-generating processes with exact and
//! Monte Carlo counterfactual oracles ([`simulation`]).
//!
//! Data-parallel loops (folds, replicates, bootstrap draws, oracle
//! trajectories) run on rayon when the `parallel` feature is enabled and
//! sequentially otherwise; results are identical either way.

// `!(x > 0.0)` is the NaN-rejecting form of a positivity check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod exec;
pub mod learners;
pub mod panel;
pub mod policy;
pub mod ratio;
pub mod rng;
pub mod simulation;
pub mod stats;

pub use error::{Error, Result};
