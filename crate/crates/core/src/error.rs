use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vertex enumeration is limited to dim <= {max}, got {dim}")]
    DimensionGuard { dim: usize, max: usize },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("empty sample set")]
    EmptySamples,

    #[error("no closed-form truncated covariance for {0}")]
    NoClosedForm(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot parse {input:?}: {message}")]
    Parse { input: String, message: String },

    #[error("bracketing failed: {0}")]
    BracketFailure(String),

    #[error(
        "distribution is not centered: coordinate {coordinate} has pilot mean {mean:e} ({se:e} standard error)"
    )]
    NonCentered { coordinate: usize, mean: f64, se: f64 },

    #[error("partial sum overflowed in trial {trial} at step {step}")]
    Overflow { trial: u64, step: u64 },

    #[error("missing artifacts in {dir}: {missing:?}")]
    MissingArtifacts { dir: PathBuf, missing: Vec<String> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(input: &str, msg: impl Into<String>) -> Self {
        Error::Parse {
            input: input.to_string(),
            message: msg.into(),
        }
    }
}
