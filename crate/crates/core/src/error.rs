use alloc::string::String;

/// Errors reported by the numerical routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A matrix that must be positive definite is not (frame or Gram matrix).
    #[error("degenerate frame: {0}")]
    DegenerateFrame(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    /// An argument is outside the supported domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// The requested accuracy cannot be reached at the working precision.
    #[error("precision loss: {0}")]
    Precision(String),
    /// A non-finite or otherwise unusable intermediate value.
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
