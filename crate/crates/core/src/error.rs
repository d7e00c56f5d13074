use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// No training point carries kernel mass at the query.
    #[error("empty kernel neighborhood at query")]
    EmptyNeighborhood,

    #[error("predictor covariance is singular")]
    SingularCovariance,

    #[error("requested dimension {dim} exceeds ambient dimension {ambient}")]
    DimensionTooLarge { dim: usize, ambient: usize },

    #[error("insufficient sample size: need more than {needed}, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cross-validation failed: every candidate failed on fold {fold}")]
    CrossValidation { fold: usize },

    #[error("fit failed on fold {fold}: {message}")]
    FoldFit { fold: usize, message: String },

    #[error("auxiliary variable required but sample has no Z columns")]
    MissingAuxiliary,

    #[error("monte carlo run failed: {failed} of {total} replications failed")]
    TooManyFailures { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
