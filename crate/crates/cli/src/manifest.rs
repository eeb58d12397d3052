//! Run manifest: per-stage status, input hashes, output file lists and
//! wall times. A stage is skipped iff its stored input hash matches the
//! freshly computed one and all its outputs still exist.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: String,
    pub input_hash: String,
    pub outputs: Vec<String>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn path(out_dir: &Path) -> PathBuf {
        out_dir.join("manifest.json")
    }

    pub fn load(out_dir: &Path) -> Result<RunManifest, CliError> {
        let path = Self::path(out_dir);
        if !path.exists() {
            return Ok(RunManifest::default());
        }
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::runtime(format!("corrupt manifest {}: {e}", path.display())))
    }

    pub fn save(&self, out_dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(out_dir)?;
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::runtime(format!("manifest serialization: {e}")))?;
        std::fs::write(Self::path(out_dir), text)?;
        Ok(())
    }

    pub fn record(&mut self, stage: &str, input_hash: u64, outputs: Vec<String>, wall_ms: u64) {
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                status: "done".into(),
                input_hash: format!("{input_hash:016x}"),
                outputs,
                wall_ms,
            },
        );
    }

    /// True when the stage is recorded with this hash and every listed
    /// output file still exists.
    pub fn is_current(&self, out_dir: &Path, stage: &str, input_hash: u64) -> bool {
        match self.stages.get(stage) {
            Some(rec) => {
                rec.status == "done"
                    && rec.input_hash == format!("{input_hash:016x}")
                    && rec.outputs.iter().all(|o| out_dir.join(o).exists())
            }
            None => false,
        }
    }
}

/// FNV-1a over byte chunks; the stage input fingerprint.
pub struct Hasher(u64);

impl Hasher {
    pub fn new() -> Self {
        Hasher(0xcbf29ce484222325)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Hasher {
    fn default() -> Self {
        Self::new()
    }
}
