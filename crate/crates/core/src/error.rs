use thiserror::Error;

/// Errors surfaced by the identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Schur stable (spectral radius {rho})")]
    Unstable { rho: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample count {n} is not a positive multiple of the period {period}")]
    NotPeriodMultiple { n: usize, period: usize },

    #[error("out-of-order sample: expected index {expected}, got {got}")]
    OutOfOrder { expected: usize, got: usize },

    #[error("frequency selection violates orthogonality requirements: {0}")]
    Selection(String),

    #[error("excitation is not persistently exciting: {0}")]
    InsufficientExcitation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
