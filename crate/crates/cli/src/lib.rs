//! Experiment runner behind the `deltaflow` binary: TOML configs, training
//! and ablation sweeps on a worker pool, flow scoring and perturbation, and
//! CSV output tagged with a hash of the configuration that produced it.

pub mod commands;
pub mod config;
pub mod output;
pub mod pool;

pub use config::{AblateConfig, AblateMode, ConfigError, ExperimentConfig, Variant};
