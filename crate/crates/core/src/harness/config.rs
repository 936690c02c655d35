use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detect::DetectionConfig;
use crate::lm::{FeedForwardKind, ModelConfig, PositionEncoding, Precision, TrainConfig, SPECIAL_COUNT};
use crate::preprocess::{DrainConfig, Grouping};
use crate::rl::RewardConfig;

use super::split::SplitConfig;
use super::synth::SyntheticSpec;
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    WithRl,
    WithoutRl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Raw log files, read in order as one stream.
    pub paths: Vec<PathBuf>,
    /// Built-in format name: `bgl`, `thunderbird`, `hdfs` or `synthetic`.
    pub format: String,
    /// Optional `session_id,Label` CSV (HDFS style; `Anomaly` marks a session).
    pub label_file: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            paths: Vec::new(),
            format: "synthetic".into(),
            label_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub drain: DrainConfig,
    pub grouping: Grouping,
    /// Longer sequences are split into chunks of this many keys.
    pub max_context: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            drain: DrainConfig::default(),
            grouping: Grouping::Session,
            max_context: 128,
        }
    }
}

/// Architecture knobs; the vocabulary comes from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub precision: Precision,
    pub positional: PositionEncoding,
    pub feed_forward: FeedForwardKind,
    pub init_std: f64,
    pub norm_eps: f64,
    pub rope_base: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let c = ModelConfig::toy(SPECIAL_COUNT + 1);
        ModelSection {
            n_layers: c.n_layers,
            n_heads: c.n_heads,
            d_model: c.d_model,
            d_ff: c.d_ff,
            precision: c.precision,
            positional: c.positional,
            feed_forward: c.feed_forward,
            init_std: c.init_std,
            norm_eps: c.norm_eps,
            rope_base: c.rope_base,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, key_count: usize, max_context: usize) -> ModelConfig {
        ModelConfig {
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            max_context,
            vocab_size: key_count + SPECIAL_COUNT,
            precision: self.precision,
            positional: self.positional,
            feed_forward: self.feed_forward,
            init_std: self.init_std,
            norm_eps: self.norm_eps,
            rope_base: self.rope_base,
        }
    }
}

/// Everything a run depends on. Every stage seed is derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: Mode,
    pub output_dir: PathBuf,
    /// Append every RL step to `rl_trace.jsonl`.
    pub dump_traces: bool,
    pub dataset: DatasetConfig,
    pub preprocess: PreprocessConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub reward: RewardConfig,
    pub detect: DetectionConfig,
    pub split: SplitConfig,
    /// When present and `dataset.paths` is empty, `run` generates the corpus.
    pub synth: Option<SyntheticSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            mode: Mode::WithRl,
            output_dir: PathBuf::from("run"),
            dump_traces: false,
            dataset: DatasetConfig::default(),
            preprocess: PreprocessConfig::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            reward: RewardConfig::default(),
            detect: DetectionConfig::default(),
            split: SplitConfig::default(),
            synth: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::InvalidConfig(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |e: String| HarnessError::InvalidConfig(e);
        self.preprocess.drain.validate().map_err(|e| invalid(e.to_string()))?;
        self.train.validate().map_err(|e| invalid(e.to_string()))?;
        self.reward.validate().map_err(|e| invalid(e.to_string()))?;
        self.split.validate()?;
        self.model
            .model_config(1, self.preprocess.max_context)
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        if let Some(spec) = &self.synth {
            spec.validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn model_seed(&self) -> u64 {
        self.seed
    }

    pub fn train_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn finetune_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }

    pub fn synth_seed(&self) -> u64 {
        self.seed.wrapping_add(3)
    }

    pub fn split_seed(&self) -> u64 {
        self.seed.wrapping_add(4)
    }
}
