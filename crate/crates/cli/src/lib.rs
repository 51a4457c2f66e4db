//! Command-line interface and HTTP conversation service.

pub mod args;
pub mod chat;
mod commands;
pub mod config;
pub mod input;
pub mod server;
pub mod session;

use std::ffi::OsString;

use clap::Parser;

use crate::args::Cli;
use crate::config::Config;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0:#}")]
    Failed(#[from] anyhow::Error),
    /// Diagnostics were already printed.
    #[error("failed")]
    Reported,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failed(_) | CliError::Reported => EXIT_FAILED,
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.config {
        Some(path) => Config::load(path).map_err(CliError::Failed),
        None => Ok(Config::default()),
    }
    .and_then(|config| commands::dispatch(cli.command, &config));
    match result {
        Ok(code) => code,
        Err(e) => {
            if !matches!(e, CliError::Reported) {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    }
}
