//! Experiment runner for the `aaegd` solvers: TOML configs, parameter sweeps,
//! per-solver trace CSVs and summary tables.

pub mod config;
pub mod error;
pub mod runner;
pub mod trace_io;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use runner::{output_dir, run_experiment, sweep, SweepAxis};
