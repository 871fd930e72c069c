//! Provenance record written beside every output artifact.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: RunConfig,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<ArtifactDigest>,
    pub seed: u64,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
}

/// Write `bytes` to `path` through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let name = path.file_name().ok_or_else(|| CliError::Usage(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

/// Collects what a command read and wrote, then emits one manifest per output.
pub struct Recorder {
    command: String,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(command: &str) -> Self {
        Self { command: command.into(), started: Instant::now(), inputs: Vec::new(), outputs: Vec::new() }
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    /// Atomically write an artifact and remember it.
    pub fn output(&mut self, p: &Path, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(p, bytes)?;
        self.outputs.push(p.to_path_buf());
        Ok(())
    }

    pub fn finish(self, config: &RunConfig) -> Result<(), CliError> {
        let outputs = self
            .outputs
            .iter()
            .map(|p| Ok(ArtifactDigest { path: p.clone(), sha256: sha256_file(p)? }))
            .collect::<Result<Vec<_>, CliError>>()?;
        let manifest = RunManifest {
            command: self.command,
            args: std::env::args().skip(1).collect(),
            config: config.clone(),
            inputs: self.inputs,
            outputs,
            seed: config.seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        for out in &self.outputs {
            write_atomic(&manifest_path(out), text.as_bytes())?;
        }
        Ok(())
    }
}
