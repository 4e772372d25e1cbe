//! Experiment orchestration: configs, seeding, instrumented runs, sweeps,
//! correlation statistics, and SVG figures.

pub mod config;
pub mod plot;
pub mod run;
pub mod seeding;
pub mod stats;
pub mod sweep;
pub mod tworoom;

pub use config::{Algorithm, ExperimentConfig, Variant};
pub use run::{run_experiment, verify_run, IterationRecord, RunResult, SummaryRecord};
