use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("model evaluated at the peak hour t = {0}")]
    PeakHour(f64),

    #[error("anticipation-response ratio undefined: response area is zero")]
    UndefinedRatio,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("data quality: {0}")]
    DataQuality(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("schema error in {file}: missing columns {missing:?}")]
    Schema { file: String, missing: Vec<String> },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
