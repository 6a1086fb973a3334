//! Experiment runner behind the `critvar` binary.

pub mod config;
pub mod run;

pub use config::ExperimentConfig;
pub use run::{execute, Subcommand};
