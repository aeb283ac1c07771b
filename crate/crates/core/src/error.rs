use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("operator is not self-adjoint (relative asymmetry {0:.3e})")]
    NotSelfAdjoint(f64),
    #[error("ridge operator is not positive definite: min eigenvalue {min_eigenvalue:.6e} + zeta {zeta:.3e} <= 0")]
    RidgeNotPositive { min_eigenvalue: f64, zeta: f64 },
    #[error("truncation rank {rank} invalid: {reason}")]
    Rank { rank: usize, reason: String },
    #[error("schedule violates {0}")]
    Schedule(String),
    #[error("lag radius {radius} aliases for series length {len} (need radius < len/2)")]
    Aliasing { radius: usize, len: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures, as opposed to bad input or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::RidgeNotPositive { .. } | Error::Rank { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
