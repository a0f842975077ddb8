//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Coarse classification used by the command-line front end to pick an
/// exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Caller supplied an invalid argument or configuration.
    Usage,
    /// Input data could not be read or failed validation.
    Data,
    /// A numerical routine could not produce a usable result.
    Numerical,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid coordinate: latitude {latitude}, longitude {longitude}")]
    InvalidCoordinate { latitude: f64, longitude: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("parameterization {model} is not defined for d = {d}")]
    IllegalParameterization { model: String, d: usize },

    #[error("need more rows than components: n = {n}, K = {k}")]
    TooFewRows { n: usize, k: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error("no valid rows in {0}")]
    NoValidRows(PathBuf),

    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("zero variance in feature column `{0}`")]
    ZeroVariance(String),

    #[error("unsupported model document version {0}")]
    UnsupportedVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_)
            | Error::IllegalParameterization { .. }
            | Error::TooFewRows { .. } => ErrorKind::Usage,
            Error::DegenerateData(_) | Error::Numerical(_) => ErrorKind::Numerical,
            Error::DimensionMismatch { .. } => ErrorKind::Data,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
