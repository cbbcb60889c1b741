//! File formats, configuration, and the experiment harness around
//! `dhgat-core`. Everything that needs the filesystem or wall-clock time
//! lives here; the core crate stays pure.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod embedfile;
pub mod graphio;
pub mod harness;
pub mod ingest;
pub mod report;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] dhgat_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("gradient check failed:\n{0}")]
    GradCheck(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
