//! Experiment orchestration for stirlab: schema-checked configs, the named
//! experiments, sweeps and flat-file artifacts.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod record;
pub mod sweep;

pub use config::{ExperimentConfig, ExperimentKind, SchemaError};
pub use experiments::{execute, run_experiment};
pub use record::{ExperimentRecord, Table};
pub use sweep::{sweep, SweepOutcome};
