use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside the domain of a model function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The daily integrator produced a non-finite value.
    #[error("integration failed at step {step}: {reason}")]
    Integration { step: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input file. `line` is 1-based and counts the header.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    /// Every particle had zero weight at time index `t`.
    #[error("particle filter collapsed at t = {t}: all weights are zero")]
    FilterCollapse { t: usize },

    #[error("sampler could not start: {0}")]
    Startup(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code for the command-line driver: 2 config, 3 data, 4 inference.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Parse { .. } | Error::Data(_) | Error::Io { .. } | Error::Csv(_) => 3,
            Error::Domain(_)
            | Error::Integration { .. }
            | Error::FilterCollapse { .. }
            | Error::Startup(_) => 4,
        }
    }
}
