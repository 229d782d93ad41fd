use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A configuration document or engine setting is unusable. `path` names the
    /// offending field (for example `levels[1].grid`), empty when not applicable.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{what} {value} out of range {range}")]
    Range {
        what: &'static str,
        value: i64,
        range: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    /// A simulator-internal invariant failed at runtime.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
