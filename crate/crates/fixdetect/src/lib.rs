//! Detects fixes (and regressions) of flaky test failures from CI run logs.
//!
//! The pipeline has three stages:
//!
//! 1. [`causal`] groups observed failures by the code change that causes
//!    them, comparing failure probabilities under interventions (running a
//!    baseline version vs. a patched version of the code).
//! 2. [`series`] turns per-bucket probability comparisons into a time series
//!    of causal degrees for each (method, failure signature) pair.
//! 3. [`cpd`] locates changepoints in those series and classifies each one
//!    as a fix (degree dropped) or a bug (degree rose).
//!
//! [`sim`] generates synthetic run logs with known ground truth and [`eval`]
//! scores pipeline output against that truth.

pub mod causal;
pub mod cpd;
mod error;
pub mod eval;
pub mod jsonl;
pub mod series;
pub mod sim;
pub mod types;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
