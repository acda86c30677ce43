//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by dataset validation, solvers, and inference routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input (dimensions, non-finite values, bad grids).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A column of the design has zero empirical variance and cannot be standardized.
    #[error("column {column} has zero empirical variance")]
    ZeroVarianceColumn { column: usize },

    /// Numerical failure during fitting or matrix factorization.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// No grid point produced a converged fit.
    #[error("no converged fit on the tuning grid: {0}")]
    NoConvergedFit(String),

    /// A nodewise residual variance collapsed, so the inverse-Gram row is undefined.
    #[error("nodewise regression {column} is numerically singular (tau^2 = {tau_sq:e})")]
    SingularNodewise { column: usize, tau_sq: f64 },

    /// The h x h covariance block of a joint test is not positive definite.
    #[error("test covariance matrix is singular (condition estimate {condition:e})")]
    SingularTestCovariance { condition: f64 },

    /// I/O failure when reading or writing files.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// CSV parsing failure with location information.
    #[error("csv error at row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },

    /// Serialization failure.
    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
