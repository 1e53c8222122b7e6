//! Command-line front end: declarative model configuration, toy generation,
//! fitting, thread-scaling benchmarks and plot data.

pub mod cli;
pub mod commands;
pub mod config;
pub mod generate;

pub use config::{Built, ConfigError, ModelConfig, NodeSpec};
