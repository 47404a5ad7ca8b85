use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the crate.
///
/// The variants are grouped by how a caller is expected to react: I/O and
/// parse failures come from the outside world, validation failures from bad
/// arguments, numerical failures from data that defeats an algorithm.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("stationarity violation: {0}")]
    Stationarity(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("Gamma(0) is numerically singular; offending transformations {first} and {second}")]
    SingularCovariance { first: usize, second: usize },

    #[error("optimization failed from all {starts} starting points")]
    Optimization { starts: usize },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for errors caused by invalid input rather than by the data.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Stationarity(_) | Error::Unsupported(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
