//! Run manifests: one `manifest.json` per artifact directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Command-line arguments without the binary name and without `--out`,
    /// so the run can be replayed into any directory.
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// SHA-256 of every input file, keyed by path as given.
    pub inputs: BTreeMap<String, String>,
    pub tool_version: String,
    pub deterministic: bool,
    /// Milliseconds per stage; all zero in deterministic mode.
    pub timings_ms: BTreeMap<String, u64>,
    /// Command-specific details.
    #[serde(default)]
    pub details: serde_json::Value,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<RunManifest, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Collects what goes into a manifest while a command runs.
pub struct Recorder {
    manifest: RunManifest,
    start: Instant,
}

impl Recorder {
    pub fn new(command: &str, args: Vec<String>, config: serde_json::Value, deterministic: bool) -> Self {
        Recorder {
            manifest: RunManifest {
                command: command.to_string(),
                args,
                config,
                seeds: Vec::new(),
                inputs: BTreeMap::new(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                deterministic,
                timings_ms: BTreeMap::new(),
                details: serde_json::Value::Null,
            },
            start: Instant::now(),
        }
    }

    /// Read an input file, recording its hash.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.manifest.inputs.insert(path.display().to_string(), hex);
        Ok(bytes)
    }

    pub fn read_string(&mut self, path: &Path) -> Result<String, CliError> {
        let bytes = self.read(path)?;
        String::from_utf8(bytes).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seeds.push(seed);
    }

    pub fn details(&mut self, details: serde_json::Value) {
        self.manifest.details = details;
    }

    /// Record the time since the last lap (or the start) under `stage`.
    pub fn lap(&mut self, stage: &str) {
        let ms = if self.manifest.deterministic {
            0
        } else {
            self.start.elapsed().as_millis() as u64
        };
        self.manifest.timings_ms.insert(stage.to_string(), ms);
        self.start = Instant::now();
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

/// Drop `--out <dir>` / `--out=<dir>` from an argument list.
pub fn strip_out(args: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--out" || a == "-o" {
            skip = true;
        } else if !a.starts_with("--out=") {
            out.push(a.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strip_out_removes_both_forms() {
        let a: Vec<String> = ["gen", "--out", "x", "--seed", "1", "--out=y"].iter().map(|s| s.to_string()).collect();
        assert_eq!(strip_out(&a), ["gen", "--seed", "1"]);
    }
}
