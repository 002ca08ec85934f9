use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("feature vector has norm {norm} > 1")]
    FeatureNormExceeded { norm: f64 },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("insufficient data: schedule needs {required} examples, dataset has {available}")]
    InsufficientData { required: usize, available: usize },

    #[error("infinite privacy loss: {0}")]
    InfinitePrivacyLoss(String),

    #[error("datasets differ in {positions} positions; coupling needs at most one")]
    NotNeighbors { positions: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("malformed data file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
