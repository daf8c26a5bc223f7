use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulator, training pipeline or CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("non-uniform spacing at row {row}")]
    NonUniform { row: usize },
    #[error("no samples")]
    NoSamples,
    #[error("degenerate sample")]
    Degenerate,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("horizon too short")]
    HorizonTooShort,
    #[error("data shorter than one window ({have} < {need} samples)")]
    TooShort { have: usize, need: usize },
    #[error("missing trained policy for: {}", .0.join(", "))]
    MissingPolicy(Vec<String>),
    #[error("pair (A, B) is not stabilizable")]
    NotStabilizable,
    #[error("Riccati iteration did not converge after {0} steps")]
    NoConvergence(usize),
    #[error("singular linear system in {0}")]
    Singular(&'static str),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical routines (as opposed to bad input data).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NotStabilizable | Error::NoConvergence(_) | Error::Singular(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
