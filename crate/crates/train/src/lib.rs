//! Data ingestion, SGD training, evaluation, metrics and checkpoints for
//! evenly cascaded networks.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod metrics;
pub mod optim;
pub mod rng;
pub mod schedule;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use error::{Result, TrainError};
pub use metrics::{MetricsLog, MetricsRecord};
pub use optim::{sgd_step, OptimState, SgdConfig};
pub use schedule::{lr_at, Schedule};
pub use trainer::{evaluate, EpochStats, Evaluation, TrainConfig, Trainer};
