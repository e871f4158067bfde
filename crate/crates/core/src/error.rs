use alloc::string::String;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("placement budget exhausted after placing {achieved} of {requested} samples")]
    Capacity { achieved: usize, requested: usize },
    #[error("batch-norm running statistics are uninitialized")]
    UninitializedStats,
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },
    #[error("singular design matrix: column `{column}` is linearly dependent on earlier columns")]
    SingularDesign { column: String },
    #[error("statistic unavailable: {0}")]
    UnavailableStatistic(String),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("target variance is zero; R² is undefined")]
    UndefinedVariance,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
