use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("graph contains a directed cycle")]
    CycleDetected,

    #[error("malformed graph: {0}")]
    MalformedGraph(String),

    #[error("positional encoding width must be even and positive, got {0}")]
    InvalidDim(usize),

    #[error("invalid architecture for space `{space}`: {violations:?}")]
    InvalidArchitecture {
        space: String,
        violations: Vec<String>,
    },

    #[error("search space `{space}` has an estimated {estimate} architectures, above the cap of {cap}")]
    SpaceTooLarge { space: String, estimate: f64, cap: u64 },

    #[error("posterior normalizer underflowed at step {t}")]
    DegenerateDistribution { t: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("no benchmark entry for `{0}`")]
    MissingEntry(String),

    #[error("bootstrap pool is empty")]
    EmptyPool,

    #[error("hypervolume supports at most 3 objectives, got {0}")]
    DimensionUnsupported(usize),

    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}:{line}: metric `{metric}` = {value} is outside [0, 1]")]
    Range {
        path: PathBuf,
        line: usize,
        metric: String,
        value: f64,
    },

    #[error("{path}:{line}: key `{key}` does not decode to a valid architecture: {msg}")]
    Key {
        path: PathBuf,
        line: usize,
        key: String,
        msg: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

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
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
