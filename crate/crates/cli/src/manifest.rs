//! Output files and the per-run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub kind: String,
    pub library_version: String,
    pub seed: u64,
    pub workers: usize,
    pub config: serde_json::Value,
    pub started_at: String,
    pub finished_at: String,
    pub status: String,
    pub files: Vec<FileEntry>,
    pub phases: Vec<Phase>,
    pub notes: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects outputs in memory; nothing touches the disk until
/// [`Outputs::write`].
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(String, String)>,
    pub phases: Vec<Phase>,
    pub notes: Vec<String>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body));
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        self.notes.push(msg.into());
    }

    pub fn timed<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.phases.push(Phase { name: name.to_string(), seconds: start.elapsed().as_secs_f64() });
        out
    }

    pub fn body(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_str())
    }

    /// Writes every file plus `manifest.json` into `dir`.
    pub fn write(self, dir: &Path, mut manifest: RunManifest) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
            manifest.files.push(FileEntry { name: name.clone(), bytes: body.len(), sha256: sha256_hex(body.as_bytes()) });
        }
        manifest.phases = self.phases;
        manifest.notes = self.notes;
        manifest.finished_at = now();
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Recomputes every checksum listed in `dir/manifest.json`.
pub fn verify(dir: &Path) -> Result<bool, CliError> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Io(e.to_string()))?;
    let files = v["files"].as_array().cloned().unwrap_or_default();
    for f in files {
        let name = f["name"].as_str().unwrap_or_default();
        let body = std::fs::read(dir.join(name))?;
        if f["sha256"].as_str() != Some(sha256_hex(&body).as_str()) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
