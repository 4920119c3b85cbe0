//! Run manifests: a JSON snapshot of what produced each output, written next
//! to the primary artifact. Re-running the same command with the same inputs
//! and seeds reproduces identical outputs in deterministic mode.

use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub deterministic: bool,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub wall_time_s: f64,
}

pub struct ManifestBuilder {
    command: String,
    deterministic: bool,
    seed: Option<u64>,
    config: serde_json::Value,
    inputs: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(
        command: &str,
        deterministic: bool,
        seed: Option<u64>,
        config: serde_json::Value,
    ) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            deterministic,
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> geomob::Result<()> {
        self.inputs
            .insert(path.display().to_string(), geomob::io::file_digest(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Digest the outputs and write `<primary>.manifest.json`.
    pub fn write(self, primary: &Path) -> geomob::Result<()> {
        let mut outputs = BTreeMap::new();
        for p in &self.outputs {
            outputs.insert(p.display().to_string(), geomob::io::file_digest(p)?);
        }
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            deterministic: self.deterministic,
            seed: self.seed,
            config: self.config,
            inputs: self.inputs,
            outputs,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        let path = manifest_path(primary);
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| geomob::Error::Validation(format!("manifest: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    primary.with_file_name(name)
}
