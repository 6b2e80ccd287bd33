use std::path::{Path, PathBuf};

use anticipation::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("missing {path}: run `anticipation {command}` first")]
    Dependency { path: PathBuf, command: &'static str },

    #[error("usage: {0}")]
    Usage(String),

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

pub type CliResult<T> = Result<T, CliError>;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 usage or configuration, 2 data quality, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Dependency { .. } | CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } | CliError::Csv(_) | CliError::Json(_) => EXIT_DATA,
            CliError::Core(e) => match e {
                CoreError::InvalidParams(_) | CoreError::Config(_) => EXIT_USAGE,
                CoreError::PeakHour(_) | CoreError::UndefinedRatio | CoreError::Degenerate(_) => EXIT_NUMERICAL,
                CoreError::Parse { .. }
                | CoreError::DataQuality(_)
                | CoreError::InsufficientData(_)
                | CoreError::Schema { .. }
                | CoreError::Io { .. }
                | CoreError::Csv(_)
                | CoreError::Json(_) => EXIT_DATA,
            },
        }
    }
}
