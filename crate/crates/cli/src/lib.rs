//! Configuration, experiment presets and run directories for the `nlkg`
//! command line tool.

pub mod config;
pub mod run;

pub use config::{parse_config, parse_str, ConfigError, ExperimentConfig, Scenario};
pub use run::{run_experiment, RunError, RunOptions, RunSummary};
