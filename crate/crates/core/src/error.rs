//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad classification of an [`Error`], used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad or inconsistent input data.
    Data,
    /// An encoder adapter failed to produce embeddings.
    Adapter,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("vector norm {norm:e} is too small to normalize")]
    DegenerateVector { norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("empty token bag")]
    EmptyBag,

    #[error("invalid encode request: {0}")]
    InvalidRequest(String),

    #[error("adapter failure: {0}")]
    AdapterFailure(String),

    #[error("index is empty")]
    EmptyIndex,

    #[error("record {doc_id} has no global vector")]
    MissingGlobal { doc_id: String },

    #[error("patch grid page {grid} does not match region page {regions}")]
    GeometryMismatch { grid: String, regions: String },

    #[error("corrupt index: {0}")]
    CorruptIndex(String),

    #[error("unsupported index format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("index already exists at {0}")]
    IndexExists(PathBuf),

    #[error("malformed run: {0}")]
    MalformedRun(String),

    #[error("malformed qrels: {0}")]
    MalformedQrels(String),

    #[error("vocabulary of {available} tokens is too small, need at least {needed}")]
    VocabTooSmall { needed: usize, available: usize },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::AdapterFailure(_) => ErrorClass::Adapter,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }
}
