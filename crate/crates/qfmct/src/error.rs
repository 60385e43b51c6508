//! Error type shared by all modules.

use thiserror::Error;

/// Errors produced by statistics, resampling and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (relative asymmetry {asym:.3e} exceeds {tol:.3e})")]
    NotSymmetric { asym: f64, tol: f64 },

    #[error("matrix is not positive semi-definite (eigenvalue {value:.6e} below -{tol:.3e})")]
    NotPsd { value: f64, tol: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("group {index} has {size} observations; at least 2 are required")]
    InsufficientSample { index: usize, size: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("degenerate statistic: {0}")]
    Degenerate(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
