use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input fell outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter or configuration value violates its invariant.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// The simulation produced a non-finite state.
    #[error("integration failed at t = {time:.4} s (step {step}): {detail}")]
    Integration { step: u64, time: f64, detail: String },

    #[error("unknown {kind} `{name}`")]
    Lookup { kind: &'static str, name: String },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("checksum mismatch in {0}")]
    Checksum(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn format(what: &'static str, detail: impl ToString) -> Self {
        Error::Format {
            what,
            detail: detail.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from user input rather than a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Param(_) | Error::Lookup { .. } | Error::Format { .. } | Error::Io { .. }
        )
    }
}
