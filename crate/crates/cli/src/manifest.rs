//! Run manifests: what was run, on which input bytes, and what it wrote.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{io_err, CliError};

pub const SEED_ENV: &str = "EHRJOINT_SEED";

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub artifact_version: String,
    /// SHA-256 over every input, each framed by its name and length.
    pub config_hash: String,
    pub inputs: Vec<InputRecord>,
    pub seed: Option<u64>,
    /// "config", "env" or "default".
    pub seed_source: Option<String>,
    pub threads: usize,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
}

/// Collects inputs while a command runs and writes the manifest at the end.
pub struct ManifestBuilder {
    command: String,
    inputs: Vec<(String, Vec<u8>)>,
    seed: Option<(u64, String)>,
    outputs: Vec<String>,
    started: Instant,
    started_unix: u64,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            inputs: Vec::new(),
            seed: None,
            outputs: Vec::new(),
            started: Instant::now(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        }
    }

    pub fn input(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.inputs.push((name.into(), bytes.into()));
    }

    /// Reads a file, records its bytes as an input and returns them.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        self.input(path.display().to_string(), bytes.clone());
        Ok(bytes)
    }

    pub fn seed(&mut self, seed: u64, source: &str) {
        self.seed = Some((seed, source.to_string()));
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn finish(self, out_dir: &Path) -> Result<RunManifest, CliError> {
        let mut hasher = Sha256::new();
        let mut inputs = Vec::new();
        for (name, bytes) in &self.inputs {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(bytes);
            inputs.push(InputRecord {
                name: name.clone(),
                sha256: hex::encode(Sha256::digest(bytes)),
                bytes: bytes.len(),
            });
        }
        let path = out_dir.join("manifest.json");
        let mut outputs = self.outputs;
        outputs.push(path.display().to_string());
        let manifest = RunManifest {
            command: self.command,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: hex::encode(hasher.finalize()),
            inputs,
            seed: self.seed.as_ref().map(|s| s.0),
            seed_source: self.seed.map(|s| s.1),
            threads: rayon::current_num_threads(),
            started_unix: self.started_unix,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            outputs,
        };
        write_json(&path, &manifest)?;
        Ok(manifest)
    }
}

/// Seed from `EHRJOINT_SEED` when set, otherwise `configured` (or 0), with its source.
pub fn resolve_seed(configured: Option<u64>) -> Result<(u64, &'static str), CliError> {
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw
            .trim()
            .parse()
            .map(|s| (s, "env"))
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}='{raw}' is not an unsigned 64-bit integer"))),
        Err(_) => Ok(match configured {
            Some(s) => (s, "config"),
            None => (0, "default"),
        }),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(dir.to_path_buf())
}
