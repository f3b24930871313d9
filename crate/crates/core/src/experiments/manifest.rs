use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{Config, ExperimentError};

#[derive(Clone, Debug, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Echo of a run: configuration, versions, wall-clock times and output checksums.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub artifact_version: String,
    pub config: Config,
    pub eps0: f64,
    pub started_at: String,
    pub finished_at: String,
    pub passed: bool,
    pub outputs: Vec<OutputRecord>,
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn checksum(path: &Path) -> Result<OutputRecord, ExperimentError> {
    let data = std::fs::read(path)?;
    let file = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(OutputRecord { file, bytes: data.len() as u64, sha256: hex::encode(Sha256::digest(&data)) })
}

impl RunManifest {
    /// Writes `manifest.json` next to the outputs.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, ExperimentError> {
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}
