use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::resolve_k;
use crate::lm::{entropy, LanguageModel, Scalar};
use crate::preprocess::LogKeySequence;

use super::{compute_returns, compute_reward, sample_action, RewardConfig, RlError};

/// One decision of the agent: predict the key at position `t + 1` from the
/// true prefix `keys[..=t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub action: usize,
    pub log_prob: f64,
    pub candidates: Vec<usize>,
    pub true_key: usize,
    pub anomalous: bool,
    pub reward: f64,
    #[serde(rename = "return")]
    pub ret: f64,
    pub entropy: f64,
}

impl StepRecord {
    pub fn hit(&self) -> bool {
        self.candidates.contains(&self.true_key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub sequence_id: String,
    pub keys: Vec<usize>,
    /// Model version the trace was sampled under.
    pub policy_version: u64,
    pub steps: Vec<StepRecord>,
    pub total_reward: f64,
}

impl EpisodeTrace {
    /// Assemble a trace, filling in returns and the reward total.
    pub fn new(
        sequence_id: impl Into<String>,
        keys: Vec<usize>,
        policy_version: u64,
        mut steps: Vec<StepRecord>,
        discount: f64,
    ) -> EpisodeTrace {
        steps.sort_by_key(|s| s.t);
        let rewards: Vec<f64> = steps.iter().map(|s| s.reward).collect();
        for (s, r) in steps.iter_mut().zip(compute_returns(&rewards, discount)) {
            s.ret = r;
        }
        EpisodeTrace {
            sequence_id: sequence_id.into(),
            keys,
            policy_version,
            total_reward: rewards.iter().sum(),
            steps,
        }
    }

    /// The state of step `i`: the key prefix it was conditioned on.
    pub fn state(&self, i: usize) -> &[usize] {
        &self.keys[..=self.steps[i].t]
    }
}

/// Roll the policy over labeled sequences with teacher forcing.
///
/// Each sequence gets its own RNG stream derived from `seed` and its index,
/// so the traces do not depend on the thread count.
pub fn run_episode<F: Scalar>(
    model: &LanguageModel<F>,
    sequences: &[LogKeySequence],
    cfg: &RewardConfig,
    seed: u64,
) -> Result<Vec<EpisodeTrace>, RlError> {
    cfg.validate()?;
    let vocab = *model.vocab();
    let k = resolve_k(cfg.k, vocab.key_count).map_err(|e| RlError::InvalidConfig(e.to_string()))?;
    let version = model.version();
    sequences
        .par_iter()
        .enumerate()
        .map(|(i, seq)| {
            let keys = seq.keys();
            let mut steps = Vec::with_capacity(keys.len().saturating_sub(1));
            if keys.len() >= 2 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let dists = model.next_key_distributions(&keys[..keys.len() - 1])?;
                for (t, dist) in dists.iter().enumerate() {
                    let sampled = sample_action(dist, k, &mut rng)?;
                    let h = entropy(dist).to_f64().unwrap_or(0.0).max(0.0);
                    let (true_key, anomalous) = (keys[t + 1], seq.labels()[t + 1]);
                    let reward = compute_reward(&sampled.candidates, true_key, anomalous, h, cfg);
                    steps.push(StepRecord {
                        t,
                        action: sampled.action,
                        log_prob: sampled.log_prob,
                        candidates: sampled.candidates,
                        true_key,
                        anomalous,
                        reward,
                        ret: 0.0,
                        entropy: h,
                    });
                }
            }
            Ok(EpisodeTrace::new(
                seq.sequence_id(),
                keys.to_vec(),
                version,
                steps,
                cfg.discount,
            ))
        })
        .collect()
}

/// One line of a trace dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub episode: usize,
    pub sequence_id: String,
    pub policy_version: u64,
    #[serde(flatten)]
    pub step: StepRecord,
}

/// Append every step of `traces` as JSON lines.
pub fn write_trace_dump<W: Write + ?Sized>(out: &mut W, episode: usize, traces: &[EpisodeTrace]) -> Result<(), RlError> {
    for trace in traces {
        for step in &trace.steps {
            let line = TraceLine {
                episode,
                sequence_id: trace.sequence_id.clone(),
                policy_version: trace.policy_version,
                step: step.clone(),
            };
            serde_json::to_writer(&mut *out, &line).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn read_trace_dump<R: BufRead>(input: R) -> Result<Vec<TraceLine>, RlError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| RlError::InvalidConfig(format!("trace dump line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}
