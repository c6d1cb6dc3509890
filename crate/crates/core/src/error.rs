use thiserror::Error;

/// Errors raised by matrix kernels, state/channel constructors and measures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("not positive semidefinite: minimum eigenvalue {min_eigenvalue:e}")]
    NotPositive { min_eigenvalue: f64 },

    /// A named invariant of a state, operator, channel or measurement failed.
    #[error("invariant `{name}` violated (residual {residual:e})")]
    Invariant { name: &'static str, residual: f64 },

    #[error("no support on the code subspace (weight {weight:e})")]
    NoCodeSupport { weight: f64 },

    #[error("eigendecomposition did not converge")]
    NoConvergence,

    #[error("malformed input: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn mismatch(expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
