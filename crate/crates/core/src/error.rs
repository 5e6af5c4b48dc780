//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error(
        "infeasible target for residual dimension {dim}: {target} lies outside \
         the attainable interval ({lo}, {hi})"
    )]
    InfeasibleTarget {
        dim: usize,
        target: f64,
        lo: f64,
        hi: f64,
    },

    /// Solver ran out of iterations; carries the last iterate so callers can
    /// inspect how close it got.
    #[error("no convergence after {iterations} iterations (gradient sup-norm {grad_norm:e})")]
    NoConvergence {
        iterations: usize,
        grad_norm: f64,
        last_lambda: Vec<f64>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sampler tuning failure: {0}")]
    TuningFailure(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("record version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: String, expected: String },
}

pub type Result<T> = std::result::Result<T, Error>;
