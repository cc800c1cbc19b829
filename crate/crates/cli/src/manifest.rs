use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::files::write_json;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub version: String,
    pub started_at: String,
    pub wall_clock_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn digests(paths: &[PathBuf], base: Option<&Path>) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            let shown = base.and_then(|b| p.strip_prefix(b).ok()).unwrap_or(p);
            Ok(FileDigest {
                path: shown.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

/// Every regular file under `dir` except manifests, sorted.
pub fn list_outputs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != MANIFEST) {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

pub struct Recorder {
    command: String,
    started: Instant,
    started_at: String,
}

impl Recorder {
    pub fn start(command: &str) -> Self {
        Self {
            command: command.to_string(),
            started: Instant::now(),
            started_at: chrono::Local::now().to_rfc3339(),
        }
    }

    pub fn finish(self, out: &Path, config: serde_json::Value, seeds: Vec<u64>, inputs: &[PathBuf]) -> Result<()> {
        let outputs = list_outputs(out)?;
        let m = Manifest {
            command: self.command,
            config,
            seeds,
            inputs: digests(inputs, None)?,
            outputs: digests(&outputs, Some(out))?,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: self.started_at,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        write_json(&out.join(MANIFEST), &m)
    }
}
