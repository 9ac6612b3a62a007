use std::io;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("key mismatch: ciphertext was not produced under this key")]
    KeyMismatch,

    #[error("ciphertexts are incompatible: {0}")]
    Incompatible(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// The multiplicative budget of a ciphertext is spent; bootstrap first.
    #[error("level exhausted in {op}: needs level {needed}, ciphertext has {available}")]
    LevelExhausted {
        op: &'static str,
        needed: u32,
        available: u32,
    },

    #[error("layout error: {0}")]
    Layout(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("batch mismatch: {0}")]
    Batch(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("worker {worker} timed out after {secs:.1}s")]
    Timeout { worker: String, secs: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn layout(msg: impl Into<String>) -> Self {
        Error::Layout(msg.into())
    }

    pub(crate) fn capacity(msg: impl Into<String>) -> Self {
        Error::Capacity(msg.into())
    }
}
