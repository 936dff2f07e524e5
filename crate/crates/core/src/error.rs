use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is rank deficient: smallest singular value {sigma_min:.3e} below tolerance {tolerance:.3e}")]
    RankDeficient { sigma_min: f64, tolerance: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid system dimensions: {0}")]
    InvalidDims(String),

    #[error("invalid power configuration: {0}")]
    InvalidPower(String),

    /// Asymptotic formulas need M/K > 1 and 0 < K/N < 1.
    #[error("outside the asymptotic regime: {0}")]
    Regime(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
