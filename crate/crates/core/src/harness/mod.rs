//! Configuration, synthetic data, corpus splits and the staged pipeline
//! behind the command-line tool.

mod config;
mod manifest;
mod pipeline;
mod split;
pub mod synth;

use std::path::PathBuf;

use thiserror::Error;

use crate::detect::DetectError;
use crate::lm::LmError;
use crate::preprocess::PreprocessError;
use crate::rl::RlError;

pub use config::{DatasetConfig, Mode, ModelSection, PreprocessConfig, RunConfig};
pub use manifest::{CorpusStats, RunManifest, StageRecord, StageStatus};
pub use pipeline::{
    read_label_file, with_thread_policy, KeyMap, ParseReport, Pipeline, CATALOG, CORPUS, DETECTIONS,
    FINETUNE_REPORT, KEYMAP, MANIFEST, METRICS, MODEL, MODEL_RL, SPLITS, TRACE, TRAIN_REPORT,
};
pub use split::{split_corpus, CorpusSplit, Selection, SplitConfig, SplitIds};
pub use synth::{cmd_synth, generate, AnomalyKind, MarkovProcess, SyntheticCorpus, SyntheticSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Model(#[from] LmError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code: 1 usage, 2 data, 3 missing artifact.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) | HarnessError::InvalidConfig(_) | HarnessError::InvalidSpec(_) => 1,
            HarnessError::MissingArtifact(_) => 3,
            _ => 2,
        }
    }
}
