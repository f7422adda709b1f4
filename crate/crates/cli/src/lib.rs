//! File formats and command-line workflows on top of `regretctl-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;
pub mod table;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
