use std::path::{Path, PathBuf};
use std::time::Instant;

use heatkernel::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one invocation: what ran, on which bytes, and what it wrote.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub tool_version: String,
    pub wall_time_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn hash_all(paths: &[PathBuf]) -> Result<Vec<FileHash>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileHash {
                path: p.clone(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

/// Collects inputs before the run so their hashes describe what was read.
pub struct Recorder {
    command: String,
    parameters: serde_json::Value,
    inputs: Vec<FileHash>,
    start: Instant,
}

impl Recorder {
    pub fn start(command: &str, parameters: &impl Serialize, inputs: &[PathBuf]) -> Result<Self> {
        Ok(Recorder {
            command: command.to_string(),
            parameters: serde_json::to_value(parameters)?,
            inputs: hash_all(inputs)?,
            start: Instant::now(),
        })
    }

    /// Hashes `outputs` and writes the manifest to `path`.
    pub fn finish(self, outputs: &[PathBuf], path: &Path) -> Result<()> {
        let manifest = RunManifest {
            command: self.command,
            parameters: self.parameters,
            inputs: self.inputs,
            outputs: hash_all(outputs)?,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_seconds: self.start.elapsed().as_secs_f64(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }
}

/// `<out>.manifest.json` next to a single output file.
pub fn beside(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}
