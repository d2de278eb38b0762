//! Experiment harness for the ICAS toy pipeline: config loading, variant
//! orchestration, metric aggregation, and machine-readable outputs.

pub mod config;
pub mod error;
pub mod experiments;
pub mod parallel;
pub mod report;

pub use config::{ExperimentConfig, ExperimentKind, Overrides};
pub use error::{HarnessError, Result};
pub use experiments::{run, run_to_dir, GAMMA_GRID};
pub use report::{RunReport, METRICS_HEADER};
