//! Adaptive human-assisted labeling for wild data that mixes in-distribution
//! examples with covariate-shifted and semantic out-of-distribution examples.
//!
//! The crate is organised bottom-up:
//!
//! - [`wildgen`] generates synthetic wild pools with known ground truth, the
//!   simulated human oracle, and the analytic maximum-ambiguity threshold.
//! - [`scores`] turns classifier logits into OOD scores (larger = more OOD).
//! - [`search`] is the noisy binary search: the empirical objective, the
//!   interval shrink step and the phase-1 loop.
//! - [`strategies`] holds the budgeted labeling strategies (the two-phase
//!   adaptive strategy and the baseline labeling regions).
//! - [`learner`] trains the classifier and the level-set OOD detector and
//!   computes the evaluation metrics.
//! - [`harness`] runs seeded experiment grids and writes reports.

pub mod error;
pub mod harness;
pub mod learner;
pub mod scores;
pub mod search;
pub mod strategies;
pub mod wildgen;

pub use error::{Error, Result};
