use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("files come from different configs: {first} ({}) vs {second} ({})", first_path.display(), second_path.display())]
    FingerprintMismatch {
        first: String,
        first_path: PathBuf,
        second: String,
        second_path: PathBuf,
    },
    #[error(transparent)]
    Core(#[from] htcontrol::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// 1 for numerical or contract failures, 2 for usage, config and I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(htcontrol::Error::Config { .. }) => 2,
            CliError::Core(_) | CliError::Failed(_) => 1,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
