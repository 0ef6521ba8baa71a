use alloc::string::String;
use thiserror::Error;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("control metric is zero; lift is undefined")]
    ZeroControl,

    #[error("sample has {0} observations, at least 2 are required")]
    DegenerateSample(usize),

    #[error("ground truth contains a zero entry at index {0}")]
    ZeroTruth(usize),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("all actions are identical; cannot build bins")]
    DegenerateActions,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("estimator requires a reward model")]
    MissingRewardModel,

    #[error("all importance weights are zero")]
    AllWeightsZero,

    #[error("kernel {0} is not differentiable")]
    NonDifferentiableKernel(&'static str),

    #[error("tuning grid is empty")]
    EmptyGrid,

    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
