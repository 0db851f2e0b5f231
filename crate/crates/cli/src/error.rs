use std::path::{Path, PathBuf};

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Bad configuration or input data.
    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Numerical(String),

    #[error(transparent)]
    Core(#[from] homsim_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    /// 1 for I/O, 2 for rejected input, 3 for numerical failure.
    pub fn exit_code(&self) -> u8 {
        use homsim_core::Error as E;
        match self {
            CliError::Io { .. } | CliError::Core(E::Io(_)) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) | CliError::Core(E::Numerical(_)) => 3,
            CliError::Core(_) => 2,
        }
    }
}
