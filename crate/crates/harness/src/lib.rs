//! Experiment harness for the agreement simulator: adversary strategies,
//! run configuration, batch sweeps, and communication-scaling analysis.

pub mod adversary;
pub mod config;
pub mod runner;
pub mod scaling;

pub use config::{AdversarySpec, InputAssignment, RunConfig};
pub use runner::{execute, run_suite, RunRecord, SuiteResult};
pub use scaling::{scaling_report, ScalingReport};
