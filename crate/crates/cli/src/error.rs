use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] icas_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A contract the run checks on itself did not hold.
    #[error("audit failed: {0}")]
    Audit(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 2 config, 3 partition breach, 4 numeric, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Core(e) => match e {
                icas_core::Error::Config(_) => 2,
                icas_core::Error::PartitionBreach(_) => 3,
                e if e.is_numeric() => 4,
                _ => 1,
            },
            HarnessError::Io { .. } | HarnessError::Audit(_) => 1,
        }
    }
}
