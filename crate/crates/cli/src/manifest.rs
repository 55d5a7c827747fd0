//! Run manifest: everything needed to reproduce a run bit-exactly, plus
//! the produced file list. This is the only output carrying a timestamp.

use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub library_version: &'static str,
    pub timestamp_utc: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            config: serde_json::to_value(config).expect("config serializes"),
            seed,
            library_version: env!("CARGO_PKG_VERSION"),
            timestamp_utc: chrono::Utc::now().to_rfc3339(),
            outputs: Vec::new(),
        }
    }

    pub fn record(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Write the manifest itself (listed among its outputs).
    pub fn write(mut self, out_dir: &Path) -> ebpool::Result<()> {
        let path: PathBuf = out_dir.join("manifest.json");
        self.outputs.push(path.display().to_string());
        std::fs::write(&path, serde_json::to_string_pretty(&self)?)?;
        Ok(())
    }
}

/// Write a file and record it in the manifest.
pub fn emit(manifest: &mut RunManifest, out_dir: &Path, name: &str, contents: &str) -> ebpool::Result<PathBuf> {
    let path = out_dir.join(name);
    std::fs::write(&path, contents)?;
    manifest.record(&path);
    Ok(path)
}
