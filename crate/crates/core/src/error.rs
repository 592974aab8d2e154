use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("covariance matrix is singular or ill-conditioned")]
    SingularCovariance,
    #[error("covariance is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),
    #[error("covariance is not diagonal; use a mixture or Monte Carlo evaluator")]
    NonDiagonalCovariance,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid box: lower bound exceeds upper bound on axis {0}")]
    InvalidBox(usize),
    #[error("mixture weights must be nonnegative and sum to one")]
    InvalidWeights,
    #[error("particle set is empty")]
    EmptyParticleSet,
    #[error("mask selects no time steps")]
    EmptyMask,
    #[error("quantile {alpha} not reached; accumulated mass {mass}")]
    NotReached { alpha: f64, mass: f64 },
    #[error("quadrature did not reach tolerance {0:e}")]
    ToleranceNotMet(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
