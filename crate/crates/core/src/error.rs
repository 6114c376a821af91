use std::path::PathBuf;

use thiserror::Error;

/// Every failure a library operation can signal.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),
    #[error("model not fitted: {0}")]
    NotFitted(String),
    #[error("episode is over; call reset")]
    EpisodeOver,
    #[error("no data: {0}")]
    NoData(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("misaligned panels: {0}")]
    MisalignedPanels(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("csv error in {path}: {msg}")]
    Csv { path: PathBuf, msg: String },
    #[error("io error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by user input or configuration rather than a runtime fault.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Csv { .. }
                | Error::Io { .. }
                | Error::InvalidInput(_)
                | Error::MisalignedPanels(_)
                | Error::NoData(_)
                | Error::NotFitted(_)
                | Error::Shape(_)
        )
    }
}
