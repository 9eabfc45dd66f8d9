use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("grid spec mismatch: {0}")]
    SpecMismatch(String),

    #[error("degenerate trajectory: {0}")]
    DegenerateTrajectory(String),

    #[error("no path found: {0}")]
    NoPath(String),

    #[error("invalid search problem: {0}")]
    InvalidProblem(String),

    #[error("broken parent chain: {0}")]
    BrokenChain(String),

    #[error("retries exhausted: {0}")]
    RetryExhausted(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed or inconsistent input data, as
    /// opposed to search failures or environment problems.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Format(_)
                | Error::Parse { .. }
                | Error::Range(_)
                | Error::OutOfBounds(_)
                | Error::Shape(_)
                | Error::SpecMismatch(_)
                | Error::DegenerateTrajectory(_)
                | Error::InvalidProblem(_)
                | Error::Config(_)
                | Error::Io { .. }
        )
    }
}
