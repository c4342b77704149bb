//! Experiment drivers behind the `solist` binary.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::RunConfig;
pub use error::{CliError, Result};
