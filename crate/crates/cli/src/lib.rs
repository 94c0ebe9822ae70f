//! Configuration-driven front end for CIVR propagation runs.

pub mod commands;
pub mod config;

pub use commands::{RunError, RunResult};
pub use config::{ConfigError, RunConfig};
