use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numeric error{}: {message}", fmt_iteration(*.iteration))]
    Numeric {
        iteration: Option<u64>,
        message: String,
    },

    #[error("usage error: {0}")]
    Usage(String),
}

fn fmt_iteration(iteration: Option<u64>) -> String {
    iteration.map_or_else(String::new, |k| format!(" at iteration {k}"))
}

impl Error {
    pub(crate) fn numeric(message: impl Into<String>) -> Self {
        Error::Numeric {
            iteration: None,
            message: message.into(),
        }
    }

    /// Attaches an iteration index to a numeric error that lacks one.
    pub fn at_iteration(self, k: u64) -> Self {
        match self {
            Error::Numeric {
                iteration: None,
                message,
            } => Error::Numeric {
                iteration: Some(k),
                message,
            },
            other => other,
        }
    }

    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Dimension { .. } => 2,
            Error::Format { .. } | Error::Consistency(_) | Error::Io { .. } => 3,
            Error::Numeric { .. } => 4,
        }
    }
}
