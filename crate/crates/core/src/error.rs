use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{name} = {value} is outside its domain ({domain})")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("class count 2^{exponent} does not fit in a 64-bit count")]
    Overflow { exponent: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("matrix rows are not orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),

    #[error("empty class list")]
    EmptyClassList,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{path}: malformed PGM: {reason}")]
    Pgm { path: PathBuf, reason: String },

    #[error("{path}: image is {got:?}, expected {expected:?}")]
    ImageSize {
        path: PathBuf,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("class directory {0} contains no images")]
    EmptyClass(PathBuf),

    #[error("class {label} has {count} sample(s); at least 2 are needed")]
    TooFewSamples { label: usize, count: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, domain: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            domain,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
