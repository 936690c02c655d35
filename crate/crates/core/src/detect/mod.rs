//! Top-K-miss anomaly detection and sequence-level metrics.
//!
//! A position is flagged when the true next key is not among the model's K
//! most probable next keys, or when it is an unseen template (UNK). A
//! sequence is anomalous iff any position is flagged.

mod metrics;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{LanguageModel, LmError, Scalar};
use crate::preprocess::LogKeySequence;
use crate::rl::top_k_candidates;

pub use metrics::{evaluate, MetricsReport};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("invalid K: {0}")]
    InvalidK(String),
    #[error("no detection results to evaluate")]
    EmptyResults,
    #[error(transparent)]
    Model(#[from] LmError),
}

/// Candidate-list size: an absolute count or a fraction of the key count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KSpec {
    Count(usize),
    Fraction(f64),
}

impl Default for KSpec {
    fn default() -> Self {
        KSpec::Fraction(0.5)
    }
}

/// Resolve K against `key_count`: a fraction becomes
/// `ceil(fraction * key_count)`, and the result is clamped to `[1, key_count]`.
pub fn resolve_k(k: KSpec, key_count: usize) -> Result<usize, DetectError> {
    if key_count == 0 {
        return Err(DetectError::InvalidK("no log keys to choose from".into()));
    }
    let raw = match k {
        KSpec::Count(0) => return Err(DetectError::InvalidK("K must be at least 1".into())),
        KSpec::Count(c) => c,
        KSpec::Fraction(f) if f > 0.0 && f <= 1.0 => {
            // guard against 0.3 * 10 = 3.0000000000000004 rounding up to 4
            (f * key_count as f64 - 1e-9).ceil().max(0.0) as usize
        }
        KSpec::Fraction(f) => {
            return Err(DetectError::InvalidK(format!("fraction {f} is outside (0, 1]")))
        }
    };
    Ok(raw.clamp(1, key_count))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    #[serde(default)]
    pub k: KSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub sequence_id: String,
    pub flagged_positions: Vec<usize>,
    pub predicted_label: bool,
    pub true_label: bool,
}

/// Flag positions of one sequence whose key misses the Top-K candidates.
///
/// `sequence` holds model token indices. A single-key sequence has no
/// transition to test; only the UNK rule applies to it.
pub fn detect_sequence<F: Scalar>(
    model: &LanguageModel<F>,
    sequence: &LogKeySequence,
    cfg: &DetectionConfig,
) -> Result<DetectionResult, DetectError> {
    let vocab = *model.vocab();
    let k = resolve_k(cfg.k, vocab.key_count)?;
    let keys = sequence.keys();
    let mut flagged: Vec<usize> = Vec::new();
    if keys[0] == vocab.unk() {
        flagged.push(0);
    }
    if keys.len() < 2 {
        log::warn!(
            "sequence {} has a single key; no transition to test",
            sequence.sequence_id()
        );
    } else {
        let dists = model.next_key_distributions(keys)?;
        for t in 0..keys.len() - 1 {
            let next = keys[t + 1];
            let miss = if next == vocab.unk() {
                true
            } else if vocab.is_key(next) {
                !top_k_candidates(&dists[t], k)
                    .map_err(|e| DetectError::InvalidK(e.to_string()))?
                    .contains(&next)
            } else {
                false
            };
            if miss {
                flagged.push(t + 1);
            }
        }
    }
    Ok(DetectionResult {
        sequence_id: sequence.sequence_id().to_string(),
        predicted_label: !flagged.is_empty(),
        flagged_positions: flagged,
        true_label: sequence.sequence_label(),
    })
}

/// [`detect_sequence`] over many sequences in parallel; output keeps input order.
pub fn detect_all<F: Scalar>(
    model: &LanguageModel<F>,
    sequences: &[LogKeySequence],
    cfg: &DetectionConfig,
) -> Result<Vec<DetectionResult>, DetectError> {
    sequences
        .par_iter()
        .map(|s| detect_sequence(model, s, cfg))
        .collect()
}
