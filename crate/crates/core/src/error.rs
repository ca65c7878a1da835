use std::path::PathBuf;

use thiserror::Error;

use crate::data::IdxError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("value {value:e} has no finite neighbour in that direction")]
    Range { value: f32 },

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error("checksum mismatch for {path}: expected {expected}, got {actual}")]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("download of {url} failed: {reason}")]
    Network { url: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite {what} at step {step} (epoch {epoch:?})")]
    NonFinite {
        what: &'static str,
        epoch: Option<usize>,
        step: usize,
    },

    #[error("{0}")]
    Metric(String),

    #[error("plan `{plan}`: {reason}")]
    Plan { plan: String, reason: String },

    #[error("run store: {0}")]
    Store(String),

    #[error("run {run_id} (replicate {replicate}) failed: {source}")]
    Run {
        run_id: String,
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::Range { .. } => "range",
            Error::Idx(_) => "idx_parse",
            Error::Checksum { .. } => "checksum",
            Error::Network { .. } => "network",
            Error::Config(_) => "config",
            Error::NonFinite { .. } => "non_finite",
            Error::Metric(_) => "metric",
            Error::Plan { .. } => "plan",
            Error::Store(_) => "store",
            Error::Run { .. } => "run",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
