use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

/// Values a `--config` TOML file may supply. Keys use the flag spelling;
/// anything given on the command line wins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub timeout_s: Option<u64>,
    pub max_rows: Option<usize>,
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub model: Option<String>,
    pub no_exec: Option<bool>,
    pub sandbox_cmd: Option<String>,
    pub replay_cache: Option<PathBuf>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub max_frame_rows: Option<usize>,
    pub instruction: Option<String>,
    pub split: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kebab_keys_and_unknown_rejected() {
        let c: FileConfig = toml::from_str("timeout-s = 5\nmax-rows = 3\nno-exec = true").unwrap();
        assert_eq!((c.timeout_s, c.max_rows, c.no_exec), (Some(5), Some(3), Some(true)));
        assert!(toml::from_str::<FileConfig>("bogus = 1").is_err());
    }
}
