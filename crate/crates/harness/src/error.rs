use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Numerical(hints_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, msg: impl Into<String>) -> Self {
        HarnessError::Format { path: path.to_path_buf(), msg: msg.into() }
    }

    /// 2 config error, 3 numerical failure, 4 I/O error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numerical(_) => 3,
            HarnessError::Io { .. } | HarnessError::Format { .. } => 4,
        }
    }
}

impl From<hints_core::Error> for HarnessError {
    fn from(e: hints_core::Error) -> Self {
        match e {
            hints_core::Error::InvalidParameter(msg) => HarnessError::Config(msg),
            hints_core::Error::Io(source) => HarnessError::Io { path: PathBuf::new(), source },
            other => HarnessError::Numerical(other),
        }
    }
}
