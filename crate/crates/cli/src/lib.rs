//! File formats and subcommands of the `sparse-demand` command-line tool.

pub mod commands;
pub mod config;
pub mod dataset_io;
pub mod draws_io;
pub mod error;
pub mod manifest;
pub mod output;

pub use commands::{Cli, Command};
pub use error::{CliError, Result};
