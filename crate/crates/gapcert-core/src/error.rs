use thiserror::Error;

/// Errors surfaced by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("supports are not mutually absolutely continuous")]
    SupportMismatch,

    #[error("p is not Gibbs w.r.t. q within tolerance (max deviation {0:.3e})")]
    NotGibbs(f64),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("trajectory {trajectory} diverged at step {step}")]
    Diverged { trajectory: usize, step: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
