use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coordinate {index} = {value} lies outside [0, 1]")]
    OutOfDomain { index: usize, value: f64 },

    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("partition too large: {side}^{dim} strata exceeds the index range")]
    Capacity { side: usize, dim: usize },

    #[error("stratum index {index} out of range for {count} strata")]
    InvalidStratum { index: usize, count: usize },

    #[error("budget n = {n} is infeasible, need at least {required}")]
    InfeasibleBudget { n: usize, required: usize },

    #[error("statistics undefined for an empty accumulator")]
    EmptyAccumulator,

    #[error("all stratum standard deviations are zero")]
    DegenerateProblem,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("not enough data points: {0}")]
    InsufficientData(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
