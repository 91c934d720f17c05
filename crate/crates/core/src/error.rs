use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid pattern: {0}")]
    InvalidPattern(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("training failed in task {task}, epoch {epoch}, batch {batch}: {source}")]
    Training {
        task: usize,
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("bad IDX magic number {0:#010x}")]
    IdxBadMagic(u32),

    #[error("unsupported IDX type {0:#010x}")]
    IdxUnsupportedType(u32),

    #[error("truncated IDX stream: expected {expected} bytes, found {actual}")]
    IdxTruncated { expected: usize, actual: usize },

    #[error("IDX stream has {0} trailing bytes after the declared payload")]
    IdxTrailingBytes(usize),

    #[error("IDX dimensions overflow the address space")]
    IdxDimensionOverflow,

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("checksum mismatch for {path}: expected {expected}, got {actual}")]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed results file {path}: {reason}")]
    Results { path: PathBuf, reason: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) | Error::Config(_) => ErrorKind::Config,
            Error::NonFinite(_) => ErrorKind::Numeric,
            Error::Training { source, .. } => match source.kind() {
                ErrorKind::Data => ErrorKind::Data,
                _ => ErrorKind::Numeric,
            },
            Error::DimensionMismatch { .. }
            | Error::InvalidPattern(_)
            | Error::Empty(_)
            | Error::IdxBadMagic(_)
            | Error::IdxUnsupportedType(_)
            | Error::IdxTruncated { .. }
            | Error::IdxTrailingBytes(_)
            | Error::IdxDimensionOverflow
            | Error::Dataset(_)
            | Error::Checksum { .. }
            | Error::Io { .. }
            | Error::Results { .. } => ErrorKind::Data,
        }
    }
}
