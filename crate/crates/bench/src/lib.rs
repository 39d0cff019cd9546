//! Experiment harness around `laker-core`: configuration, the
//! method × size × seed sweep, table/figure emission, and the CLI.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod tables;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] laker_core::Error),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("no result rows to emit")]
    EmptyRows,

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;
