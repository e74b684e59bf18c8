//! Experiment configuration, execution and reporting.

pub mod config;
pub mod experiment;
pub mod report;
pub mod traces;

pub use config::{BoundsConfig, ExperimentConfig};
pub use experiment::{execute, run_experiment, OutputFormat, RunError};
pub use report::{complexity_report, ComplexityPoint, ComplexityReport};
