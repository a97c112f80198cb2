use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Model,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid dimensions {0:?}: need 1 to 3 positive extents")]
    InvalidDims(Vec<usize>),
    #[error("size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: u64, found: u64 },
    #[error("non-finite value at element {0}")]
    NonFinite(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("histogram has no nonzero bins")]
    EmptyHistogram,
    #[error("symbol {0} has no code in the codebook")]
    UnknownCode(u32),
    #[error("Huffman code length {0} exceeds 64 bits")]
    CodeTooLong(usize),
    #[error("corrupt archive: {0}")]
    Corrupt(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("unsupported model version {0}")]
    Version(u64),
    #[error("malformed model file: {0}")]
    ModelFormat(String),
    #[error("model not fitted for {0}")]
    Unfitted(String),
    #[error("configuration does not match model: {0}")]
    MismatchedConfig(String),
    #[error("predicted time is not monotone in the error bound: {0}")]
    NonMonotone(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) | Error::InvalidDims(_) => ErrorClass::Usage,
            Error::Version(_)
            | Error::ModelFormat(_)
            | Error::Unfitted(_)
            | Error::MismatchedConfig(_)
            | Error::NonMonotone(_)
            | Error::DegenerateFit(_) => ErrorClass::Model,
            _ => ErrorClass::Data,
        }
    }
}
