//! Decoder-only language model over log keys, trained from scratch.

pub mod checkpoint;
mod config;
mod loss;
mod model;
pub mod ops;
mod optim;
mod params;
mod scalar;
mod train;
mod vocab;

use thiserror::Error;

pub use config::{FeedForwardKind, ModelConfig, PositionEncoding, Precision};
pub use loss::{entropy, key_distribution, key_log_softmax};
pub use model::{ForwardCache, LanguageModel, Logits};
pub use optim::{Optimizer, OptimizerKind};
pub use params::{Parameters, Tensor};
pub use scalar::Scalar;
pub use train::{train, TrainConfig, TrainReport};
pub use vocab::{Vocabulary, SPECIAL_COUNT};

#[derive(Debug, Error)]
pub enum LmError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("input of {len} keys exceeds the context window of {max}")]
    ContextOverflow { len: usize, max: usize },
    #[error("token {index} is outside the vocabulary of {vocab}")]
    IndexOutOfVocab { index: usize, vocab: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("sequence has no next key to predict")]
    SequenceTooShort,
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("training corpus contains anomalous sequence `{0}`")]
    AnomalousTrainingSequence(String),
    #[error("parameter tensors do not match the configuration")]
    ShapeMismatch,
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
