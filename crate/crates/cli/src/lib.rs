//! Command-line pipeline: data generation, training, search, export and verification.

pub mod checkpoint;
pub mod cli;
mod codec;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use cli::Cli;
pub use error::{CliError, FormatError};
