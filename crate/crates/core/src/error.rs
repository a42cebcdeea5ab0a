use thiserror::Error;

/// Errors produced while loading data, fitting models or calibrating bounds.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: got {got}, need at least {need}")]
    TooSmall {
        what: &'static str,
        got: usize,
        need: usize,
    },

    #[error("dimension mismatch: expected {expected} covariates, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid record {index}: {reason}")]
    InvalidRecord { index: usize, reason: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training fold contains no uncensored events (otime < ctime)")]
    NoEvents,

    #[error("no calibration point has ctime >= cutoff c0 = {cutoff}")]
    EmptyFilteredCalibration { cutoff: f64 },

    #[error("unknown setting id {0} (expected 1..=6)")]
    UnknownSetting(u32),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by front ends to pick exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::UnknownSetting(_) => ErrorClass::Usage,
            Error::Numerical(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
