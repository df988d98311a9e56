use thiserror::Error;

/// Every failure the engine can report. Variants double as the error
/// category recorded against failed sweep cells.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("capacity error: state space of {states} states exceeds cap {cap}")]
    Capacity { states: usize, cap: usize },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable category, used in CSV status columns.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Usage(_) => "usage",
            Error::Capacity { .. } => "capacity",
            Error::Dataset(_) => "dataset",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
