use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A non-finite value appeared in parameters, gradients or optimizer state.
    #[error("diverged at step {step}")]
    Diverged { step: u64 },

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Failures when decoding a checkpoint byte stream.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("bad magic header {found:?}")]
    BadMagic { found: Vec<u8> },

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("checkpoint truncated while reading {what}")]
    Truncated { what: &'static str },

    #[error("slot `{slot}` has {actual} elements, expected {expected}")]
    SlotLengthMismatch {
        slot: String,
        expected: usize,
        actual: usize,
    },

    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
