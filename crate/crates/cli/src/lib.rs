//! Library half of the `ionize` command-line tool: configuration, output
//! bookkeeping and the subcommands themselves.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use config::Config;
pub use error::CliError;
