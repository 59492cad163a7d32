//! Experiment configuration, Monte-Carlo batches of closed-loop runs, and
//! flat-file export.

mod config;
mod experiment;
mod export;

pub use config::ExperimentConfig;
pub use experiment::{
    histogram, run_experiment, run_population, Bin, ExperimentReport, PolicyReport, RunFailure, Timing,
};
pub use export::{export, ExportedFiles};
