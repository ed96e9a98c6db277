//! Command-line runner and REST service for the fastdata engine.

pub mod api;
pub mod commands;
pub mod registry;

pub use commands::{Cli, CliError, Command};
