//! Experiment runner for functional MMD two-sample tests.

pub mod config;
pub mod experiments;
pub mod generators;
pub mod output;

pub use config::{Experiment, ExperimentConfig, Overrides};
