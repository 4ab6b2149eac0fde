//! Optimiser, learning-rate schedule and the training loop.

pub mod scheduler;
pub mod sgd;
mod trainer;

pub use scheduler::{plateau_lr, PlateauConfig, PlateauScheduler};
pub use sgd::{sgd_step, Sgd, SgdConfig};
pub use trainer::{metrics_to_csv, predict, train, EpochMetrics, TrainConfig, TrainOutcome};
