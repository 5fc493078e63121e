use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// Invalid hyperparameters or model configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Invalid input values (non-finite data, too-short series, ...).
    #[error("input error: {0}")]
    Input(String),

    /// Dataset problems: empty or too-short splits.
    #[error("data error: {0}")]
    Data(String),

    /// Degenerate numerical input where the requested quantity is undefined.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Incorrect use of the API, e.g. calling backward on a non-scalar.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    /// Usage errors map to exit code 1, everything else to 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            _ => 2,
        }
    }
}
