//! REINFORCE fine-tuning with a Top-K reward.
//!
//! At each position the agent samples the next key from the Top-K truncated
//! predictive distribution. It is rewarded when the true key's membership in
//! the Top-K set agrees with the position's ground-truth label, plus a small
//! entropy bonus, with the total clipped.

mod episode;
mod policy;
mod reinforce;
mod reward;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::KSpec;
use crate::lm::LmError;

pub use episode::{read_trace_dump, run_episode, write_trace_dump, EpisodeTrace, StepRecord, TraceLine};
pub use policy::{sample_action, top_k_candidates, SampledAction};
pub use reinforce::{finetune, policy_gradient_step, surrogate_and_grad, StepReport};
pub use reward::{compute_returns, compute_reward};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("K = {k} is outside 1..={keys}")]
    KOutOfRange { k: usize, keys: usize },
    #[error("invalid reward configuration: {0}")]
    InvalidConfig(String),
    #[error("traces were sampled under parameter version {trace}, model is at {model}")]
    StalePolicy { trace: u64, model: u64 },
    #[error("no episode steps to learn from")]
    EmptyTraces,
    #[error("policy update produced non-finite parameters")]
    NonFinite,
    #[error(transparent)]
    Model(#[from] LmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub k: KSpec,
    pub entropy_coef: f64,
    pub clip_min: f64,
    pub clip_max: f64,
    pub discount: f64,
    /// Base reward when the true key is a Top-K match at an anomalous position.
    pub match_anomalous_reward: f64,
    /// Subtract the batch mean return from every return.
    pub baseline: bool,
    pub episodes: usize,
    pub learning_rate: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            k: KSpec::Fraction(0.5),
            entropy_coef: 0.01,
            clip_min: -2.0,
            clip_max: 2.0,
            discount: 1.0,
            match_anomalous_reward: -1.0,
            baseline: false,
            episodes: 10,
            learning_rate: 1e-5,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::InvalidConfig(m.to_string()));
        if !(self.entropy_coef >= 0.0 && self.entropy_coef.is_finite()) {
            return bad("entropy_coef must be a finite value >= 0");
        }
        if self.clip_min.is_nan() || self.clip_max.is_nan() || self.clip_min >= self.clip_max {
            return bad("clip_min must be below clip_max");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("discount must lie in (0, 1]");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a finite value >= 0");
        }
        if !self.match_anomalous_reward.is_finite() {
            return bad("match_anomalous_reward must be finite");
        }
        Ok(())
    }
}
