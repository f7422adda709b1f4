use alloc::string::String;

/// Failure modes shared by every synthesis and evaluation routine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Block partitions or matrix shapes do not conform.
    #[error("structural mismatch: {0}")]
    Structure(String),
    /// Triangular factorization hit a non-positive pivot.
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    /// User-supplied data violates a documented precondition.
    #[error("invalid input: {0}")]
    Input(String),
    /// A numerical routine failed to converge or lost too much accuracy.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;
