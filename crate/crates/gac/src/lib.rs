//! File formats, configuration, logging, plotting and verification suites
//! around [`gac_core`]. The `gac` binary wraps these behind a command line.

pub mod config;
pub mod log;
pub mod plot;
pub mod run;
pub mod tensor_io;
pub mod verify;

use std::path::PathBuf;

/// Errors surfaced by the command line, each mapped to an exit code.
#[derive(Debug, thiserror::Error)]
pub enum GacError {
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("solver failure at step {step}: {source}")]
    Solver { step: usize, source: gac_core::Error },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Core(#[from] gac_core::Error),
    #[error(transparent)]
    Oracle(#[from] gac_oracle::OracleError),
}

impl GacError {
    pub fn exit_code(&self) -> u8 {
        match self {
            GacError::Config { .. } | GacError::InvalidConfig(_) => 2,
            GacError::Solver { .. } => 3,
            GacError::Verification(_) => 4,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GacError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = GacError> = std::result::Result<T, E>;
