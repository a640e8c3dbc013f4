use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub conetool: String,
    pub conetool_core: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub passed: bool,
    pub exit_code: u8,
    pub message: String,
    pub details: Vec<String>,
}

/// One per run, written to `manifest_<command>.json` in the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub threads: usize,
    pub versions: Versions,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
    pub summary: Summary,
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("manifest_{command}.json")
    }

    pub fn versions() -> Versions {
        Versions {
            conetool: env!("CARGO_PKG_VERSION").into(),
            conetool_core: conetool_core::VERSION.into(),
        }
    }

    pub fn write(&self, out: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(out)?;
        let path = out.join(Self::file_name(&self.command));
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, json + "\n")?;
        Ok(path)
    }
}
