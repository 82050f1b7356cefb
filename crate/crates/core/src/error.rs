use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a coefficient function.
    #[error("input domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// An iterative solve did not converge, or a step produced unusable values.
    #[error("numerical failure in {what}: residual {residual:e} after {iterations} iterations")]
    Numerical {
        what: String,
        residual: f64,
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("setup error: {0}")]
    Setup(String),

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. } | Error::Precondition(_))
    }
}
