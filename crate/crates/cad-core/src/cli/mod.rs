//! Experiment orchestration: config parsing, run directories, manifests,
//! the five subcommands and plot emission.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod plot;

pub use commands::{cmd_eval, cmd_sample, cmd_simulate, cmd_sweep, cmd_train, SampleOpts};
pub use config::Config;
