use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid index: {0}")]
    InvalidIndex(String),

    #[error("split fraction must lie in (0, 1), got {0}")]
    InvalidDelta(f64),

    #[error("layer {layer} has {width} neurons; pruning would go below the floor of 2")]
    PruneFloor { layer: usize, width: usize },

    #[error("PoZ window for layer {layer} neuron {neuron} is empty")]
    EmptyPozWindow { layer: usize, neuron: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed model snapshot: {0}")]
    Snapshot(String),

    #[error("missing cell in summary: {0}")]
    MissingCell(String),

    #[error("audit failed: {0}")]
    Audit(String),

    #[error("i/o error on {path}: {source}")]
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
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
