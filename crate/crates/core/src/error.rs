use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box [{x_min}, {y_min}, {x_max}, {y_max}]: need finite coords with positive area")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("model is frozen and cannot be updated")]
    Frozen,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("model role mismatch: expected {expected}, got {actual}")]
    RoleMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("labeled set is empty")]
    EmptyLabeled,

    #[error("batch has neither labeled nor unlabeled items")]
    EmptyBatch,

    #[error("no ground-truth boxes in evaluation set")]
    NoGroundTruth,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("pipeline invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
