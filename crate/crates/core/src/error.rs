use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("no input records")]
    EmptyInput,

    #[error("no usable prices in input")]
    NoPrices,

    #[error("training set contains no baskets")]
    EmptyTrainSet,

    #[error("unknown node {0}")]
    UnknownNode(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("basket has no items")]
    EmptyBasket,

    #[error("user sequence is empty")]
    EmptySequence,

    #[error("ground-truth set is empty")]
    EmptyTruth,

    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss { loss: f64, epoch: usize, step: usize },

    #[error("unknown variant `{0}`")]
    UnknownVariant(String),

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("config field `{field}`: {message}")]
    TypeError { field: String, message: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("output directory is locked: {0}")]
    Locked(PathBuf),

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable identifier used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "MissingFile",
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::MalformedRow { .. } => "MalformedRow",
            Error::EmptyInput => "EmptyInput",
            Error::NoPrices => "NoPrices",
            Error::EmptyTrainSet => "EmptyTrainSet",
            Error::UnknownNode(_) => "UnknownNode",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::EmptyBasket => "EmptyBasket",
            Error::EmptySequence => "EmptySequence",
            Error::EmptyTruth => "EmptyTruth",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::UnknownVariant(_) => "UnknownVariant",
            Error::UnknownKey(_) => "UnknownKey",
            Error::TypeError { .. } => "TypeError",
            Error::Locked(_) => "Locked",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Format { .. } => "Format",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
