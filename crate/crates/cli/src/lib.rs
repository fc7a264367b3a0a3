//! Command-line driver: simulate, screen, fit, sweep, impute, diagnose and
//! analyze, each writing its artifacts and a manifest under one output
//! directory.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::Path;

pub use commands::{execute, rerun, Command, RerunReport, SweepRow, SweepTable};
pub use config::RunConfig;
pub use manifest::{Manifest, Options};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] profimpute::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("re-run did not reproduce: {0}")]
    NotReproduced(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// 2 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}
