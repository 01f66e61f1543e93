use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: {start}..={end} on a trajectory of {len} points")]
    IndexOutOfRange { start: usize, end: usize, len: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("invalid state: {0}")]
    State(String),

    #[error("guard: {0}")]
    Guard(String),

    #[error(transparent)]
    Load(#[from] LoadError),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Failures decoding a serialized index bundle.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum LoadError {
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("unsupported index format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("index file truncated")]
    Truncated,
    #[error("index checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed index: {0}")]
    Malformed(String),
    #[error("index was built for a different trajectory store")]
    StoreMismatch,
}

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
