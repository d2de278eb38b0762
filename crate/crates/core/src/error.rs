use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid shape {shape:?} for {len} elements")]
    InvalidShape { shape: Vec<usize>, len: usize },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("partition breach: {0}")]
    PartitionBreach(String),

    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("could not place {subjects} subjects after {attempts} attempts")]
    Placement { subjects: usize, attempts: usize },

    #[error("empty mask set")]
    EmptyMasks,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("sampler diverged at step {step}")]
    Diverged { step: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Non-finite values anywhere in the stack are numeric failures.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::Diverged { .. })
    }
}
