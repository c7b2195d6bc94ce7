use std::path::PathBuf;

/// Errors raised anywhere in the clustering pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op}: entry {index:?} = {value} is outside the domain")]
    Domain {
        op: &'static str,
        index: (usize, usize),
        value: f64,
    },

    #[error("{op}: row {row} has zero norm")]
    DegenerateRow { op: &'static str, row: usize },

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("{op}: cluster {column} has no assignment mass")]
    EmptyCluster { op: &'static str, column: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("training diverged at {phase} epoch {epoch}: {detail}")]
    Divergence {
        phase: &'static str,
        epoch: usize,
        detail: String,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("manifest mismatch: {0}")]
    Manifest(String),

    #[error("{}: {source}", path.display())]
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

    /// Returns true for errors that indicate numerical blow-up during training.
    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::NonFinite { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
