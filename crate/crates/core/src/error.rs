use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the identification and simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration diverged at t = {time:.6} s")]
    Divergence { time: f64 },

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("config error: key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: msg.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: msg.into(),
        }
    }

    /// True for failures of the numerics (divergence, missing root) as opposed
    /// to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::NoRoot(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
