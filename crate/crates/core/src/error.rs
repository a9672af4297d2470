use thiserror::Error;

/// Errors raised by the adaptation library.
#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("infeasible point: {0}")]
    Infeasible(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("unsupported loss: {0}")]
    UnsupportedLoss(String),

    #[error("budget required for {0}")]
    MissingBudget(&'static str),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("cell (epsilon = {epsilon}, n = {n}, trial = {trial}): {source}")]
    Cell {
        epsilon: String,
        n: usize,
        trial: usize,
        #[source]
        source: Box<AdaptError>,
    },

    #[error("{} sweep cell(s) failed", .0.len())]
    Sweep(Vec<AdaptError>),
}

pub type Result<T> = std::result::Result<T, AdaptError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> AdaptError {
    AdaptError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
