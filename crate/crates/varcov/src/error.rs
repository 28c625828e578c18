//! Crate-wide error type.
//!
//! Variants are grouped by how callers should react: `Parse` and `Validation`
//! mean the input data is bad, everything else means the computation itself
//! could not be carried out.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Hermite-series order outside the supported range.
    #[error("series order {0} exceeds the supported maximum of {1}")]
    UnsupportedOrder(usize, usize),

    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector or tensor dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A size check failed before allocating (tensor storage, oracle limits).
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// The computation ran but produced an unusable result
    /// (non-finite values, negative total variance, no convergence).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Input data violates a documented constraint.
    #[error("validation failed: {0}")]
    Validation(String),

    /// Malformed input file. `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input data rather than by the
    /// computation itself. The CLI maps these to a distinct exit code.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Parse { .. } | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
