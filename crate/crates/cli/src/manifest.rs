use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridParams {
    pub n: usize,
    pub min: f64,
    pub max: f64,
}

/// Record of one run, written as `manifest.json` in its output directory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// every flag after config merging, defaults included
    pub flags: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub grid: GridParams,
    pub threads: usize,
    pub tool_version: String,
    /// seconds since the Unix epoch
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command: &str, flags: BTreeMap<String, String>, seed: Option<u64>, grid: GridParams, threads: usize) -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        RunManifest {
            command: command.to_string(),
            flags,
            seed,
            grid,
            threads,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(dir.join(MANIFEST_NAME), text + "\n")
    }
}
