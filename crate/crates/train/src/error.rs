use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Core(#[from] ecn_core::Error),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {len} bytes is not {expected}")]
    FileSize { path: PathBuf, len: u64, expected: String },

    #[error("{path}: record {record} has label {label}, expected fewer than {classes}")]
    BadLabel {
        path: PathBuf,
        record: usize,
        label: usize,
        classes: usize,
    },

    #[error("dataset has {found} classes but the network predicts {expected}")]
    ClassMismatch { expected: usize, found: usize },

    #[error("non-finite gradient in {param}; step aborted")]
    NonFiniteGradient { param: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss} exceeds 10x the initial {initial}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
        initial: f64,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { expected: u32, found: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("metrics: {0}")]
    Metrics(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TrainError {
    pub(crate) fn file(path: &std::path::Path, source: std::io::Error) -> Self {
        TrainError::File {
            path: path.to_path_buf(),
            source,
        }
    }
}
