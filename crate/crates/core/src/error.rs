use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// What went wrong while reading a BVH file.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BvhErrorKind {
    #[error("malformed hierarchy: {0}")]
    Hierarchy(String),
    #[error("frame has {found} values, skeleton declares {expected} channels")]
    ChannelCount { expected: usize, found: usize },
    #[error("non-numeric value {0:?}")]
    NotANumber(String),
    #[error("malformed motion section: {0}")]
    Motion(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("bvh line {line}: {kind}")]
    Bvh { line: usize, kind: BvhErrorKind },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn bvh(line: usize, kind: BvhErrorKind) -> Self {
        Error::Bvh { line, kind }
    }

    /// Short stable identifier, used by the CLI's one-line error format.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Bvh { .. } => "bvh",
            Error::Shape(_) => "shape",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::NonFinite(_) => "non-finite",
            Error::Dataset(_) => "dataset",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
