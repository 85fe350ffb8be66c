use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{Error, Result};

pub const RUN_MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    /// Hash of the stage output.
    pub sha256: String,
    /// Wall time; stages computed in one pass share a single timing entry.
    pub seconds: Option<f64>,
}

/// Provenance of one command invocation. Only `seconds` differs between identical reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub config: RunConfig,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            schema_version: RUN_MANIFEST_SCHEMA,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: config.seed,
            threads: rayon::current_num_threads(),
            config: config.clone(),
            stages: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, sha256: String, seconds: Option<f64>) {
        self.stages.push(StageRecord {
            name: name.into(),
            sha256,
            seconds,
        });
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        write_file(path, (text + "\n").as_bytes())
    }
}

/// Writes `bytes`, creating parent directories.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Hash over the names and contents of every file directly inside `dir`, in name order.
pub fn hash_dir(dir: &Path) -> Result<String> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.path().is_file() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    let mut h = Sha256::new();
    for n in names {
        let p = dir.join(&n);
        h.update(n.as_bytes());
        h.update([0]);
        h.update(fs::read(&p).map_err(|e| Error::io(&p, e))?);
    }
    Ok(hex::encode(h.finalize()))
}
