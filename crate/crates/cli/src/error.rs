use std::path::PathBuf;

use edgecast_core::data::DataError;
use edgecast_core::infer::InferError;
use edgecast_core::model::ConfigError;
use edgecast_core::nn::NnError;
use edgecast_core::search::SearchError;

/// Problems decoding a checkpoint or manifest.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic bytes")]
    Magic,
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("CRC mismatch: stored {stored:#010x}, computed {actual:#010x}")]
    Crc { stored: u32, actual: u32 },
    #[error("truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
    #[error("invalid content: {0}")]
    Invalid(String),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] NnError),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("{0}")]
    Format(#[from] FormatError),
    #[error("verification failed: {0}")]
    Verify(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 1 for verification or training failures, 2 for usage and I/O problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Config(_) | CliError::Data(_) => 2,
            CliError::Train(NnError::Config(_) | NnError::Data(_)) => 2,
            CliError::Search(
                SearchError::Space(_) | SearchError::Config(_) | SearchError::Budget(_) | SearchError::Io(_),
            ) => 2,
            _ => 1,
        }
    }
}
