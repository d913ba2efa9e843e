//! Configuration, experiment orchestration, artifacts and reports.

pub mod config;
pub mod experiment;
pub mod heatmap;
pub mod io;
pub mod sweep;
mod viridis;

pub use config::{load_config, ConfigError, ExperimentConfig, PadSetting};
pub use experiment::{run_experiment, ExperimentError, ExperimentOutcome};
pub use viridis::VIRIDIS;
