use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] rawzero_core::Error),
}

impl LabError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        LabError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        LabError::Format { path: path.to_path_buf(), message: message.into() }
    }

    /// 3 for numerical failures, 2 for everything else (bad config, IO,
    /// malformed files, invalid arguments).
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    /// Short machine-readable category used on the stderr error line.
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::Io { .. } => "io",
            LabError::Format { .. } => "format",
            LabError::Config(_) => "config",
            LabError::Core(e) if e.is_numerical() => "numerical",
            LabError::Core(_) => "invalid",
        }
    }
}

macro_rules! config_err {
    ($($arg:tt)*) => {
        $crate::error::LabError::Config(format!($($arg)*))
    };
}

pub(crate) use config_err;
