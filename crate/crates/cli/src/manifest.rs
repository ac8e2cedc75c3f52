use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

pub const MANIFEST_FILE: &str = "run_manifest.json";

/// One per run, written next to the run's outputs. The only file a run
/// writes that is expected to differ between identical invocations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub config_hash: String,
    pub config: Value,
    pub input_digest: String,
    pub counts: Value,
    pub wall_clock_s: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: &impl Serialize, input_digest: String, counts: Value, started: Instant) -> Self {
        let config = serde_json::to_value(config).unwrap_or(Value::Null);
        // serde_json maps are ordered, so this text is canonical.
        let config_hash = hex::encode(Sha256::digest(config.to_string().as_bytes()));
        RunManifest {
            subcommand: subcommand.to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            config_hash,
            config,
            input_digest,
            counts,
            wall_clock_s: started.elapsed().as_secs_f64(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hash over every file under `root`: relative path and content digest,
/// in path order.
pub fn tree_digest(root: &Path) -> Result<String> {
    let mut h = Sha256::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.with_context(|| format!("walking {}", root.display()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(file_digest(entry.path())?.as_bytes());
        h.update(*b"\n");
    }
    Ok(hex::encode(h.finalize()))
}
