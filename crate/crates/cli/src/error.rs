use std::path::{Path, PathBuf};

use thiserror::Error;
use undertrack::io::FormatError;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, parameters or file contents.
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
        }
    }

    pub fn config(msg: impl std::fmt::Display) -> Self {
        CliError::Config(msg.to_string())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Attributes a format error to `path`.
    pub fn format(path: &Path, err: FormatError) -> Self {
        match err {
            FormatError::Io(e) => Self::io(path, e),
            other => CliError::Config(format!("{}: {other}", path.display())),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
