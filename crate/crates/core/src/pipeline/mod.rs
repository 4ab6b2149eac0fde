//! Configuration and the staged end-to-end pipeline over a work directory.

pub mod config;
mod stages;

pub use config::{ModelKind, NormalizationScope, PipelineConfig, Stage2Fit, UNHASHED_KEYS};
pub use stages::{run_all, run_stage, Layout, SlicePredictions, Stage, BASELINE_MEMBER};
