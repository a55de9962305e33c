//! Command-line experiment harness: config loading, sweeps, CSV aggregation and SVG charts.

pub mod commands;
pub mod config;
pub mod svg;
pub mod sweep;

pub use commands::{dispatch, execute, Cli, Command, Failure};
pub use config::{ConfigError, ExperimentConfig};
