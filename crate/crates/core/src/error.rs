use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Each variant maps onto one of the process exit codes used by the command
/// line tool: usage problems exit 1, data problems exit 2, numeric failures
/// exit 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("index {index} out of range 1..={max} for {what}")]
    Index {
        what: &'static str,
        index: usize,
        max: usize,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("request error: {0}")]
    Request(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Numeric(_) => 3,
            Error::Shape { .. } | Error::Index { .. } => 3,
            Error::Config(_)
            | Error::Data(_)
            | Error::Parse { .. }
            | Error::Checkpoint(_)
            | Error::Request(_)
            | Error::Comparison(_)
            | Error::Io { .. } => 2,
        }
    }
}
