use std::path::PathBuf;

/// Errors raised by model loading, estimation and control.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("line {line}: {message}")]
    Record { line: u64, message: String },

    #[error("invalid {what}: {message}")]
    Validation { what: &'static str, message: String },

    #[error("{what}: expected {expected}, got {actual}")]
    DimensionMismatch { what: &'static str, expected: usize, actual: usize },

    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("degenerate sweep: {0}")]
    DegenerateSweep(String),

    #[error("unstable integration: dt*sqrt(lambda_max/m) = {0} exceeds 1")]
    Unstable(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(what: &'static str, message: impl Into<String>) -> Self {
        Error::Validation { what, message: message.into() }
    }

    /// Reads a whole file, naming the path on failure.
    pub fn read(path: &std::path::Path) -> Result<String> {
        std::fs::read_to_string(path).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn dims(what: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch { what, expected, actual }
    }

    /// True for errors caused by numerically degenerate data rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Singular(_) | Error::DegenerateSweep(_) | Error::Unstable(_))
    }
}
