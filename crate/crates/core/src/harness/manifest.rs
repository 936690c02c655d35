use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::HarnessError;

pub const MANIFEST_FORMAT: &str = "logkey-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Done,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: StageStatus,
    /// Wall time; left out of deterministic runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub records: usize,
    pub malformed_lines: usize,
    pub template_count: usize,
    pub sequences: usize,
    pub anomalous_sequences: usize,
    /// Keys seen in the training split; the model vocabulary minus specials.
    pub model_key_count: usize,
    pub train_sequences: usize,
    pub calibration_sequences: usize,
    pub test_sequences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub config: RunConfig,
    pub corpus: CorpusStats,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn new(config: &RunConfig) -> RunManifest {
        RunManifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            config_hash: config.hash(),
            config: config.clone(),
            corpus: CorpusStats::default(),
            stages: BTreeMap::new(),
        }
    }

    /// The manifest at `path` if it belongs to `config`, a fresh one otherwise.
    pub fn load_or_new(path: &Path, config: &RunConfig) -> Result<RunManifest, HarnessError> {
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            if let Ok(m) = serde_json::from_str::<RunManifest>(&text) {
                if m.config_hash == config.hash() {
                    return Ok(m);
                }
                log::info!("configuration changed; starting a new manifest");
            }
        }
        Ok(RunManifest::new(config))
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    /// Every artifact the manifest names that is missing under `dir`.
    pub fn missing_artifacts(&self, dir: &Path) -> Vec<String> {
        self.stages
            .values()
            .flat_map(|s| &s.artifacts)
            .filter(|a| !dir.join(a).exists())
            .cloned()
            .collect()
    }
}
