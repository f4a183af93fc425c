//! Experiment runner for `fockfield`: config schema, output formats, run
//! manifests and the subcommand drivers behind the `fockfield` binary.

pub mod config;
pub mod formats;
pub mod manifest;
pub mod run;
pub mod sampling;

pub use config::{ConfigError, ExperimentConfig};
pub use run::{execute, Command, Outcome, RunOptions};
