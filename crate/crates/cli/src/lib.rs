//! Command-line driver: configuration, run-directory bookkeeping and the six commands.

pub mod config;
mod outputs;
mod run;

use std::fmt;
use std::path::PathBuf;

pub use config::{load_config, parse_config, resolve_windows, RunConfig, SEED_ENV};
pub use run::{execute, Command};

/// Exit status for a missing or invalid prerequisite.
pub const EXIT_PRECONDITION: i32 = 2;
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    /// A required input or earlier artifact is absent.
    Precondition(String),
    /// Another process owns the run directory.
    Locked(PathBuf),
    Engine(hiquant::Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Precondition(_) | CliError::Locked(_) => EXIT_PRECONDITION,
            CliError::Engine(_) | CliError::Io(_) => EXIT_FAILURE,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Precondition(_) => "precondition",
            CliError::Locked(_) => "locked",
            CliError::Engine(_) => "engine",
            CliError::Io(_) => "io",
        }
    }

    /// Single-line `key=value` rendering; the message is a JSON string.
    pub fn line(&self) -> String {
        let message = serde_json::to_string(&self.to_string()).expect("string serializes");
        format!("hiquant: error kind={} exit={} message={message}", self.kind(), self.exit_code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Precondition(m) => f.write_str(m),
            CliError::Locked(p) => write!(
                f,
                "run directory is locked by another process ({}); remove the file if that run has died",
                p.display()
            ),
            CliError::Engine(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<hiquant::Error> for CliError {
    fn from(e: hiquant::Error) -> Self {
        match e {
            hiquant::Error::Config(m) => CliError::Config(m),
            other => CliError::Engine(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}
