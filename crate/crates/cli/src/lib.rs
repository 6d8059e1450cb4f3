//! Experiment runner: config parsing, subcommand dispatch, reports and the
//! acceptance suite.

pub mod acceptance;
pub mod cli;
pub mod commands;
pub mod config;
pub mod report;

pub use commands::{run_experiment, Command, Run};
pub use config::{parse_config, ConfigError, ExperimentConfig};
pub use report::{write_atomic, Check, RunReport};
