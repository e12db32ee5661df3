//! Runs simulations of the semi-cooperative planner, stores their traces,
//! and computes speed-improvement metrics over experiment sweeps.

pub mod config;
pub mod error;
pub mod output;
pub mod sweep;
pub mod trace;

pub use config::{ExperimentConfig, MatrixConfig, Overrides, Variant};
pub use error::{Result, SimError};
pub use output::write_outputs;
pub use sweep::{analyze, execute_run, plan_runs, run_experiment_matrix, RunOutcome, RunSpec, SweepResults};
pub use trace::{read_trace, write_trace, StepRecord, TRACE_SCHEMA};
