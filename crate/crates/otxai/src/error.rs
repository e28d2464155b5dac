use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] otxai_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: at `{field}`: {message}")]
    Config {
        path: PathBuf,
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("model file: {0}")]
    Model(#[from] ModelError),
    #[error("IDX file {path}: {kind}")]
    Idx { path: PathBuf, kind: IdxError },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("{0}")]
    Usage(String),
    #[error("report: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("unsupported format_version {found} (this build reads {supported})")]
    Version { found: u64, supported: u64 },
    #[error("malformed: {0}")]
    Malformed(String),
    #[error("inconsistent shapes: {0}")]
    Shape(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad magic number {0:#010x}")]
    BadMagic(u32),
    #[error("expected {expected} dimensions, header declares {found}")]
    Dimensions { expected: usize, found: usize },
    #[error("truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Config { .. } => 3,
            Error::Io { .. } => 4,
            Error::Model(_) => 5,
            Error::Idx { .. } | Error::Dataset(_) => 6,
            Error::Core(_) => 7,
            Error::Serialize(_) => 8,
        }
    }
}
