use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Record written next to every command's outputs. `config` is the fully
/// resolved configuration and can be passed back through `--config`.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub workers: usize,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            workers: rayon::current_num_threads(),
            argv: std::env::args().collect(),
            config,
            artifacts: Vec::new(),
        }
    }

    /// Hashes `files` (paths inside `out`) and writes `out/manifest.json`.
    pub fn write(mut self, out: &Path, files: &[PathBuf]) -> Result<PathBuf> {
        for f in files {
            let rel = f.strip_prefix(out).unwrap_or(f);
            self.artifacts.push(Artifact {
                path: rel.to_string_lossy().into_owned(),
                sha256: sha256_file(f)?,
                bytes: std::fs::metadata(f)?.len(),
            });
        }
        let path = out.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
