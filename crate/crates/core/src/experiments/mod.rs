//! Configuration, orchestration and file output for the command-line experiments.

mod commands;
mod config;
mod manifest;
pub mod svg;

pub use commands::{
    cmd_area_sweep, cmd_birkhoff, cmd_foliation, cmd_verify, fmt_real, foliation_samples, verify_report, CommandOutcome,
    VerifyReport,
};
pub use config::{AutoTag, Config, Eps0Setting, ProfileConfig, Seeds, Tolerances};
pub use manifest::{checksum, now_rfc3339, OutputRecord, RunManifest};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] crate::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// Process exit status: 2 for usage and configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            _ => 1,
        }
    }
}
