//! Experiment runner for the latent-context bandit simulator: config
//! parsing, sweep execution, CSV traces and JSON summaries.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{Cli, ConfigError, ExperimentConfig};
pub use runner::{execute, Report, RunError};
