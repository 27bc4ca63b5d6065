use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite coordinate at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("cannot merge sub-cluster {0} with itself")]
    DuplicateId(crate::stats::SubClusterId),

    #[error("cannot remove {part} points from a cluster holding {whole}")]
    InvalidRemoval { part: u64, whole: u64 },

    #[error("removal produced a negative sse of {sse:e} (tolerance {tolerance:e})")]
    NegativeSse { sse: f64, tolerance: f64 },

    #[error("k = {k} exceeds the {points} available points")]
    TooManyClusters { k: usize, points: usize },

    #[error("cannot split {points} points across {sites} sites")]
    TooManySites { sites: usize, points: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
