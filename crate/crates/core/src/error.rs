use std::path::PathBuf;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, labels or values that an operation cannot accept.
    #[error("rejected input: {0}")]
    InvalidInput(String),

    /// A network, scheme or layer configuration that cannot be realised.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("ingestion error in {path} at byte offset {offset}: {reason}")]
    Ingestion {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("corrupt record {record} in {path}: label byte {label} is out of range")]
    CorruptRecord {
        path: PathBuf,
        record: usize,
        label: u8,
    },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("training diverged at epoch {epoch}, step {step}: first non-finite activation in layer `{layer}`")]
    NonFinite {
        epoch: usize,
        step: usize,
        layer: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
