use std::path::PathBuf;

use ecg_autodiff::AutodiffError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported WFDB signal format {0}")]
    UnsupportedFormat(u32),
    #[error("truncated signal data: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("channel count mismatch: {0}")]
    ChannelMismatch(String),
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool: 2 configuration,
    /// 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::OutOfRange(_) => 2,
            Error::Numeric(_) => 4,
            Error::Autodiff(AutodiffError::NonFinite(_)) => 4,
            Error::Autodiff(AutodiffError::InvalidArgument(_)) => 2,
            _ => 3,
        }
    }
}
