//! Experiment runner: TOML configs in, CSV tables and plot recipes out.

pub mod config;
pub mod run;

pub use config::{validate_config, Diagnostics, ExperimentFile, Overrides, Scenario};
pub use run::{run, RunReport, SUMMARY_COLUMNS};
