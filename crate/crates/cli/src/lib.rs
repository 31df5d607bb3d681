//! Experiment driver for `gradfem-core`: configuration files, study runs,
//! sweeps over the grading ratio and the output formats (CSV, JSON, legacy
//! VTK, Matrix Market).

pub mod config;
pub mod formats;
pub mod run;

pub use config::{ExperimentConfig, GradingChoice, Mode, UsageError};
pub use run::{run, sweep, sweep_configs, RunError, RunOutcome, SweepReport, SWEEP_RATIOS};
