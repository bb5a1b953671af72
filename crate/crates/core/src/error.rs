use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid time series: {0}")]
    InvalidSeries(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("moment order {order} exceeds the supported maximum {max}")]
    OrderTooHigh { order: u32, max: u32 },

    #[error("missing moment {0}")]
    MissingMoment(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("non-finite reservoir state at t = {t}")]
    NonFiniteState { t: i64 },

    #[error("fixed-point iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("singular state autocovariance with zero ridge")]
    SingularGamma,

    #[error("teaching signal has zero variance")]
    ZeroVarianceTeaching,

    #[error("truncated series did not reach tolerance within {k_max} terms")]
    TruncationBudgetExceeded { k_max: usize },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
