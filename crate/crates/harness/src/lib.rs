//! Monte Carlo experiments over the progressive localizer and its baselines:
//! TOML configuration, a parallel runner with per-cell RNG streams, and CSV
//! output.

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

pub use config::{load_config, parse_config, ExperimentConfig, Method, Overrides};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, trajectory_run, ExperimentReport, RawRow, RmseRow, TrialFailure};
pub use output::{emit_csv, emit_trajectory, format_float, read_raw, read_rmse};
