//! Experiment runner for the `svrp` crate: JSON configs, named presets,
//! parallel seeded runs, CSV traces and SVG plots.

pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod presets;

pub use config::ExperimentConfig;
pub use error::LabError;
pub use experiment::{run_experiment, ExperimentReport};
pub use presets::{preset, PRESETS};
