//! Experiment runner for flood-regularized training.
//!
//! Every subcommand reads one JSON experiment config and writes its results
//! under `<out_dir>/<name>/<seed>/`, with a summary file per command in
//! `<out_dir>/<name>/`. Reruns with the same config overwrite outputs with
//! identical bytes; wall-clock timings go to separate files for that reason.

pub mod commands;
pub mod config;
mod error;
pub mod output;
pub mod par;
pub mod pipeline;
pub mod prep;
pub mod proposition;
pub mod stats;

pub use commands::Command;
pub use config::ExperimentConfig;
pub use error::{CliError, Result};
