//! Run manifests: what ran, on which inputs, and checksums of what it wrote.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

#[derive(Serialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Serialize)]
pub struct StageRecord {
    pub name: String,
    pub summary: serde_json::Value,
}

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    /// SHA-256 over the command line settings and every input file.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub started_unix_s: f64,
    pub seconds: f64,
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<OutputRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects inputs, stage summaries and outputs while a command runs.
pub struct ManifestBuilder {
    command: String,
    hasher: Sha256,
    seed: Option<u64>,
    started: Instant,
    started_unix_s: f64,
    stages: Vec<StageRecord>,
    outputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new(command: &str, settings: &impl Serialize) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(command.as_bytes());
        hasher.update(serde_json::to_vec(settings).unwrap_or_default());
        Self {
            command: command.to_string(),
            hasher,
            seed: None,
            started: Instant::now(),
            started_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64()),
            stages: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let bytes = std::fs::read(path)?;
        self.hasher.update(path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(&bytes);
        Ok(())
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn stage(&mut self, name: &str, summary: impl Serialize) {
        self.stages.push(StageRecord {
            name: name.to_string(),
            summary: serde_json::to_value(summary).unwrap_or(serde_json::Value::Null),
        });
    }

    pub fn output(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    /// Checksums every output and writes the manifest to `path`. Output
    /// paths are recorded relative to the manifest's directory when possible.
    pub fn write(self, path: &Path) -> CliResult<()> {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for p in &self.outputs {
            let bytes = std::fs::read(p)?;
            let rel = p.strip_prefix(&base).unwrap_or(p);
            outputs.push(OutputRecord {
                path: rel.to_string_lossy().into_owned(),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: hex::encode(self.hasher.finalize()),
            seed: self.seed,
            jobs: rayon::current_num_threads(),
            started_unix_s: self.started_unix_s,
            seconds: self.started.elapsed().as_secs_f64(),
            stages: self.stages,
            outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| crate::error::invalid(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
