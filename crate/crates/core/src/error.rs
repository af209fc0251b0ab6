use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch on {axis}: expected {expected}, got {actual}")]
    Dimension {
        axis: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    /// Every violation found while validating a configuration.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    ConfigViolations(Vec<String>),

    #[error("label {label} at index {index} is outside [0, {classes})")]
    Label {
        index: usize,
        label: usize,
        classes: usize,
    },

    #[error("domain index {index} out of range 1..={count}")]
    DomainIndex { index: usize, count: usize },

    #[error("moments were never accumulated; frozen normalization is unavailable")]
    UnfrozenMoments,

    #[error("batch purity violated: batch mixes domains {0:?}")]
    Purity(Vec<usize>),

    #[error("full sharing needs equal class counts, got {0:?}")]
    ClassCount(Vec<usize>),

    #[error("channel {channel} is degenerate (zero standard deviation)")]
    DegenerateChannel { channel: usize },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("step {step} outside schedule of {total} steps")]
    Schedule { step: usize, total: usize },

    #[error("lifecycle error: {0}")]
    Lifecycle(String),

    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("synthetic generation failed: {0}")]
    Generation(String),

    #[error("incompatible checkpoint: {0}")]
    Compatibility(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(axis: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            axis,
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } => 3,
            Error::Io { .. } | Error::Format { .. } | Error::Compatibility(_) => 4,
            _ => 2,
        }
    }
}

pub(crate) fn ensure_dim(axis: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::dim(axis, expected, actual))
    }
}
