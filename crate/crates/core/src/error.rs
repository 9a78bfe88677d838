use std::path::PathBuf;

use thiserror::Error;

use crate::store::EmbeddingRole;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("malformed JSON at line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("missing field {field} at line {line}")]
    MissingField { field: String, line: usize },

    #[error("invalid label {token:?} at line {line}")]
    InvalidLabel { token: String, line: usize },

    #[error("label count mismatch: expected {expected}, found {found}")]
    LabelCount { expected: usize, found: usize },

    #[error("bad magic bytes: expected EMB1, found {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported store version {0}")]
    UnsupportedVersion(u16),

    #[error("invalid store header: {0}")]
    Header(String),

    #[error("truncated record at index {0}")]
    Truncated(usize),

    #[error("record count mismatch: header says {header}, payload holds {found}")]
    CountMismatch { header: usize, found: String },

    #[error("non-finite value in record for instance {instance} role {role}")]
    NonFinite { instance: u32, role: EmbeddingRole },

    #[error("invalid store: {0}")]
    InvalidStore(String),

    #[error("missing role {role} for instance {instance}")]
    MissingRole { instance: u32, role: EmbeddingRole },

    #[error("invalid training config: {0}")]
    Config(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("invalid runs table: {0}")]
    Runs(String),

    #[error("need at least 3 runs for correlation, got {0}")]
    TooFewRuns(usize),

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("grid search for model {0} had no successful points")]
    EmptyGrid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for I/O, 2 for data validation, 3 for statistical preconditions.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 1,
            Error::TooFewRuns(_) | Error::ZeroVariance(_) => 3,
            _ => 2,
        }
    }
}
