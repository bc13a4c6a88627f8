//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("covariance of state {state} is not positive definite")]
    SingularCovariance { state: usize },

    #[error("numerical underflow at t = {t}: every state has zero probability")]
    NumericalUnderflow { t: usize },

    #[error("state {state} has total responsibility {responsibility:e} and no prior mass")]
    DegenerateState { state: usize, responsibility: f64 },

    #[error("all {} training restarts failed: {}", .diagnostics.len(), .diagnostics.join("; "))]
    TrainingFailed { diagnostics: Vec<String> },

    #[error("feature column {column} has zero variance over the fitting window")]
    DegenerateFeature { column: usize },

    #[error("insufficient data: need more than {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("state {state} has non-positive de-normalized volatility {volatility:e}")]
    DegenerateRegime { state: usize, volatility: f64 },

    #[error("Sharpe ratio undefined: zero volatility")]
    SharpeUndefined,

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: cannot parse date `{value}`")]
    BadDate { row: usize, value: String },

    #[error("row {row}: cannot parse number `{value}`")]
    BadNumber { row: usize, value: String },

    #[error("row {row}: date {date} does not follow the previous date")]
    NonIncreasingDate { row: usize, date: String },

    #[error("row {row}: invalid value: {reason}")]
    BadValue { row: usize, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
