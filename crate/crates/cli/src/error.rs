use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("check failed:\n  {}", .0.join("\n  "))]
    Check(Vec<String>),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl ToString) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn io(path: &Path, message: impl ToString) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Io { .. } | CliError::Data(_) => 3,
            CliError::Check(_) => 4,
            CliError::Runtime(_) => 1,
        }
    }

    /// Maps a core error raised while setting up or running `run`, prefixing
    /// configuration field paths with `prefix`.
    pub fn from_core(err: sparseprop::Error, prefix: &str) -> Self {
        use sparseprop::Error as E;
        match err {
            E::Config { field, reason } => CliError::config(format!("{prefix}{field}"), reason),
            E::Architecture(msg) => CliError::config(format!("{prefix}train.architecture"), msg),
            E::Idx(e) => CliError::Data(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
