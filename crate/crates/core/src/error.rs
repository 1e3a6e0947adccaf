//! Error type shared by the whole crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SnError>;

/// Errors produced by estimators, normalizers, simulations and table I/O.
#[derive(Debug, Error)]
pub enum SnError {
    /// Malformed data or arguments (shape mismatches, out-of-range indices,
    /// non-finite values).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A structurally valid but unusable configuration (empty clip range,
    /// level outside (0,1), mismatched table, ...).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The requested plug-in estimator is not defined on the given block
    /// (block shorter than lag + 2, unsupported functional, ...).
    #[error("estimator undefined: {0}")]
    EstimatorUndefined(String),

    /// A self-normalization matrix was numerically singular. Carries the
    /// condition number that tripped the check (`f64::INFINITY` when an
    /// eigenvalue is not strictly positive).
    #[error("singular normalizer (condition number {cond:.3e}): {context}")]
    Singular { cond: f64, context: String },

    /// Too many bootstrap replicates failed to produce a statistic.
    #[error("bootstrap unstable: {failed} of {total} replicates degenerate")]
    BootstrapUnstable { failed: usize, total: usize },

    /// Critical-value table parsing, validation or build failure.
    #[error("table error: {0}")]
    Table(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl SnError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SnError::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        SnError::InvalidConfig(msg.into())
    }
}
