//! Self-normalized inference for stationary time series.
//!
//! Inference here avoids bandwidth selection entirely: instead of a consistent
//! long-run variance estimator, test statistics are studentized by
//! inconsistent-but-proportional normalizers built from estimates on
//! contiguous subsamples of the data. The resulting limiting distributions are
//! non-standard functionals of Brownian motion, but pivotal, so their
//! quantiles can be tabulated once by Monte Carlo and reused.
//!
//! The crate provides:
//!
//! - subsample estimator grids (mean, quantile, autocorrelation, composites)
//!   with prefix-sum and order-statistic acceleration ([`estimators`]);
//! - the self-normalized statistic, its generalization over discrete measures
//!   on the triangle `{(s,t): 0 <= s <= t <= 1}`, and clipped variants
//!   ([`selfnorm`]);
//! - a self-normalized change-point test ([`changepoint`]);
//! - fixed-b subsampling p-values ([`fixedb`]);
//! - multiplier bootstrap calibration ([`bootstrap`]);
//! - Monte Carlo simulation of the Brownian limit functionals with persisted,
//!   fully provenance-stamped critical-value tables ([`limits`], [`table`]);
//! - sequential empirical process evaluation, an algebraic identity harness,
//!   and a small-subsample counterexample demo ([`seqproc`]).
//!
//! All randomized computations are deterministic per seed: replication seeds
//! are derived from a base seed by counter mixing, so results do not depend on
//! scheduling or evaluation order.

pub mod bootstrap;
pub mod changepoint;
pub mod error;
pub mod estimators;
pub mod fixedb;
pub mod hash;
pub mod limits;
pub mod linalg;
pub mod rng;
pub mod selfnorm;
pub mod seqproc;
pub mod table;
pub mod types;

pub use error::{Result, SnError};
pub use types::{DeltaMeasure, Functional, InferenceConfig, SubsampleIndex, TimeSeries};
