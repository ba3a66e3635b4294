//! Configuration files, experiment commands and report output.

pub mod commands;
pub mod config;
pub mod vtk;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{cmd_convergence, cmd_run, ConvergenceOutcome, RunSummary};
pub use config::{parse_config, CaseSpec, ConfigError, MeshSpec, RunConfig};

/// Process exit codes: 0 success, 2 config error, 3 solver error, 4 I/O.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    /// Semantically invalid configuration discovered after parsing.
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Solver(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Invalid(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}
