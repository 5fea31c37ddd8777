use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}, line {line}: {msg}")]
    Parse {
        source_name: String,
        line: u64,
        msg: String,
    },
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("train/test window: {0}")]
    Window(String),
    #[error("scaling: {0}")]
    Scaling(String),
    #[error("model: {0}")]
    Model(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("prior: {0}")]
    Prior(String),
    #[error("sampler: {0}")]
    Sampler(String),
    #[error("variational fit: {0}")]
    Variational(String),
    #[error("optimizer: {0}")]
    Optimizer(String),
    #[error("diagnostics: {0}")]
    Diagnostics(String),
    #[error("forecast: {0}")]
    Forecast(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
