//! Batch runner, reports and transcripts for the two-step EPR key
//! distribution simulator. The protocol itself lives in `eprqkd-core`.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod config;
pub mod emit;
pub mod report;
pub mod runner;

pub use config::RunConfig;
pub use report::{aggregate, verify, Aggregates, RunReport, TrialRecord, SCHEMA_VERSION};
pub use runner::{run, RunOutput};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(#[from] eprqkd_core::ConfigError),
    #[error("protocol error: {0}")]
    Protocol(#[from] eprqkd_core::ProtocolError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("report does not verify: {0}")]
    Verify(String),
}

impl SimError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for bad input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) => 2,
            SimError::Protocol(eprqkd_core::ProtocolError::Config(_)) => 2,
            _ => 1,
        }
    }
}
