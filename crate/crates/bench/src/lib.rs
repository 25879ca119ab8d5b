//! Experiment driver for `lsmclab`: configuration, grid runs, report files
//! and cross-strategy comparison.

pub mod compare;
pub mod config;
pub mod error;
pub mod model;
pub mod output;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::{BenchError, Result};
pub use output::Report;
pub use runner::{run_experiment, RunResult};
