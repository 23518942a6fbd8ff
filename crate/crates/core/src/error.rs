//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the optimization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A point lies outside the benchmark domain.
    #[error("point {point:?} violates domain bounds in dimension {dim}")]
    DomainViolation { point: Vec<f64>, dim: usize },

    /// Vector length does not match the expected dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An operation that needs data received none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A parameter left its legal range.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Training produced a non-finite loss.
    #[error("non-finite loss at epoch {epoch} (step {step})")]
    NonFiniteLoss { epoch: usize, step: usize },

    /// Cholesky factorization hit a non-positive pivot.
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    /// Plain density ratio with a vanishing denominator.
    #[error("density ratio singularity: g(x) underflowed to zero at gamma = 0")]
    RatioSingularity,

    /// No benchmark registered under this name.
    #[error("unknown benchmark {name:?}; available: {available}")]
    UnknownBenchmark { name: String, available: String },

    /// Serialization / deserialization failure.
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    /// Filesystem failure.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;
