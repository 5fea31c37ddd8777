//! Benchmark harness: fits one dataset with several inference engines and
//! writes comparable tables, traces, forecasts and plots.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod plot;
pub mod report;
pub mod run;

use std::path::PathBuf;

pub use config::{ExperimentConfig, Method, Overrides};
pub use report::{compare, MethodReport, RunReport};
pub use run::run;

impl BenchError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("plot: {0}")]
    Plot(String),
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Core(#[from] prophecy::Error),
}
