//! Configuration-driven experiment runner for the ML-QMC-FE estimators.

pub mod config;
pub mod runner;

pub use config::ExperimentConfig;
pub use runner::{run_cbc, run_experiment, run_plan, RunOutput};
