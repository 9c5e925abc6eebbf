use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("I/O error: {0}")]
    Stream(#[from] std::io::Error),

    #[error("invalid UTF-8 at byte offset {offset}")]
    Decode { offset: usize },

    /// A caller-supplied parameter is out of range. `name` identifies the
    /// offending knob (CLI flag or config key).
    #[error("invalid parameter `{name}`: {message}")]
    Param { name: String, message: String },

    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("malformed {what} at line {line}: {message}")]
    Format {
        what: &'static str,
        line: usize,
        message: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn param(name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Param {
            name: name.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(what: &'static str, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            what,
            line,
            message: message.into(),
        }
    }

    /// Process exit code: 1 for I/O, 2 for bad parameters or inputs,
    /// 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Stream(_) => 1,
            Error::Numerical(_) => 3,
            Error::Invariant(_) => 3,
            Error::Decode { .. }
            | Error::Param { .. }
            | Error::Shape { .. }
            | Error::Format { .. } => 2,
        }
    }
}
