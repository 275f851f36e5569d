use std::path::PathBuf;

use thiserror::Error;

/// Broad failure category, used by front ends to pick exit codes and HTTP
/// statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad or missing input: unreadable files, malformed records, bad flags.
    Input,
    /// Inputs parsed but violate a domain rule (unknown item, empty catalog).
    Domain,
    /// Stored artifact failed a checksum or format check.
    Integrity,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("emotion word `{0}` has no lexicon entry")]
    MissingLexiconEntry(String),

    #[error("degenerate emotion label: {0}")]
    DegenerateLabel(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate item id `{0}`")]
    DuplicateId(String),

    #[error("unknown item id `{0}`")]
    UnknownItem(String),

    #[error("no preference ratings left after removing attention checks")]
    NoPreferences,

    #[error("zero-norm embedding for item `{0}`")]
    DegenerateEmbedding(String),

    #[error("ranking universe mismatch: {0}")]
    Universe(String),

    #[error("missing cluster label for item `{0}`")]
    Label(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("invalid request: {0}")]
    Validation(String),

    /// Operation not allowed in the session's current state.
    #[error("{0}")]
    State(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parse { .. }
            | Error::Io { .. }
            | Error::Format(_)
            | Error::InvalidParameter(_)
            | Error::OutOfRange(_)
            | Error::Validation(_) => ErrorClass::Input,
            Error::Integrity(_) => ErrorClass::Integrity,
            _ => ErrorClass::Domain,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
