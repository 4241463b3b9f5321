//! Run manifests: enough to replay a run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::llm::TemplateId;

/// Seed for one consumer of randomness, derived from the run seed.
pub fn sub_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

pub fn template_checksums() -> BTreeMap<String, String> {
    TemplateId::ALL
        .into_iter()
        .map(|t| (t.name().to_string(), t.checksum()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub seed: u64,
    pub backend: String,
    pub template_checksums: BTreeMap<String, String>,
    pub scene_schema_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub outputs: Vec<PathBuf>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command_line: Vec<String>, seed: u64, backend: impl Into<String>) -> Self {
        Self {
            command_line,
            seed,
            backend: backend.into(),
            template_checksums: template_checksums(),
            scene_schema_version: crate::scene_json::SCHEMA_VERSION.to_string(),
            started_at: now(),
            finished_at: None,
            outputs: Vec::new(),
        }
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn finish(&mut self) {
        self.finished_at = Some(now());
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}
