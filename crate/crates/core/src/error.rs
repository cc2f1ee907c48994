use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("link has no non-constant Hermite component above tolerance")]
    DegenerateLink,

    #[error("polynomial degree {degree} exceeds supported maximum {max}")]
    DegreeTooLarge { degree: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dataset is already augmented")]
    AlreadyAugmented,

    #[error("pruning requires augmented data")]
    NotAugmented,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("support set is empty")]
    EmptySupport,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
