//! Experiment orchestration: configuration, runs, sweeps, audits and the
//! compression pre-simulation.

pub mod audit;
pub mod compress;
pub mod config;
pub mod metrics;
pub mod run;
pub mod sweep;

pub use config::{AlgorithmMode, ExpertInit, RunConfig};
pub use metrics::{summarize, MetricsRow, Summary};
pub use run::{run_experiment, run_with, write_run, RunOutput, RunSummary};
