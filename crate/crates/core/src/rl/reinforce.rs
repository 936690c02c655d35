use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lm::{key_log_softmax, LanguageModel, Parameters, Scalar};
use crate::preprocess::LogKeySequence;

use super::{run_episode, write_trace_dump, EpisodeTrace, RewardConfig, RlError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub version_before: u64,
    pub version_after: u64,
    pub traces: usize,
    pub steps: usize,
    pub mean_total_reward: f64,
    pub mean_entropy: f64,
    pub hit_rate: f64,
    pub baseline: f64,
    pub surrogate: f64,
    pub grad_norm: f64,
}

fn baseline(traces: &[EpisodeTrace], enabled: bool) -> f64 {
    if !enabled {
        return 0.0;
    }
    let (sum, n) = traces
        .iter()
        .flat_map(|t| &t.steps)
        .fold((0.0, 0usize), |(s, n), st| (s + st.ret, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Surrogate objective and its gradient at the current parameters:
///
/// `J = 1/N * sum_traces sum_t [(R_t - b) * log pi(a_t | s_t) + beta * H_t]`
///
/// where `pi` is the Top-K truncated policy over the candidates recorded in
/// the trace and `H_t` is the entropy of the full next-key distribution.
pub fn surrogate_and_grad<F: Scalar>(
    model: &LanguageModel<F>,
    traces: &[EpisodeTrace],
    cfg: &RewardConfig,
) -> Result<(f64, Parameters<F>), RlError> {
    if traces.is_empty() {
        return Err(RlError::EmptyTraces);
    }
    let b = baseline(traces, cfg.baseline);
    let inv_n = 1.0 / traces.len() as f64;
    let beta = cfg.entropy_coef;
    let kc = model.vocab().key_count;
    let vsize = model.config().vocab_size;

    let parts: Vec<Result<(f64, Parameters<F>), RlError>> = traces
        .par_iter()
        .map(|trace| {
            let mut grads = model.params().zeros_like();
            let Some(last) = trace.steps.iter().map(|s| s.t).max() else {
                return Ok((0.0, grads));
            };
            let (logits, cache) = model.forward_cached(&trace.keys[..=last])?;
            let mut dlogits = vec![F::zero(); logits.data.len()];
            let mut value = 0.0;
            for step in &trace.steps {
                let row = logits.row(step.t);
                let logp: Vec<f64> = key_log_softmax(row, kc)
                    .iter()
                    .map(|x| x.to_f64().unwrap_or(f64::NAN))
                    .collect();
                let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
                let h: f64 = -p.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();

                let z: Vec<f64> = step
                    .candidates
                    .iter()
                    .map(|&c| row[c].to_f64().unwrap_or(f64::NAN))
                    .collect();
                let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = z.iter().map(|v| (v - zmax).exp()).sum::<f64>().ln() + zmax;
                let z_a = row[step.action].to_f64().unwrap_or(f64::NAN);
                let weight = step.ret - b;
                value += inv_n * (weight * (z_a - lse) + beta * h);

                let drow = &mut dlogits[step.t * vsize..step.t * vsize + kc];
                for i in 0..kc {
                    let dh = -p[i] * (logp[i] + h);
                    drow[i] = drow[i] + F::of(inv_n * beta * dh);
                }
                for (&c, &zc) in step.candidates.iter().zip(&z) {
                    let q = (zc - lse).exp();
                    drow[c] = drow[c] - F::of(inv_n * weight * q);
                }
                drow[step.action] = drow[step.action] + F::of(inv_n * weight);
            }
            model.backward(&cache, &dlogits, &mut grads);
            Ok((value, grads))
        })
        .collect();

    let mut value = 0.0;
    let mut grads = model.params().zeros_like();
    for part in parts {
        let (v, g) = part?;
        value += v;
        grads.add_scaled(&g, F::one());
    }
    Ok((value, grads))
}

/// One REINFORCE ascent step `theta += alpha * grad J` on traces sampled
/// under the model's current parameters.
pub fn policy_gradient_step<F: Scalar>(
    model: &mut LanguageModel<F>,
    traces: &[EpisodeTrace],
    cfg: &RewardConfig,
    alpha: f64,
) -> Result<StepReport, RlError> {
    if traces.is_empty() {
        return Err(RlError::EmptyTraces);
    }
    let version = model.version();
    if let Some(stale) = traces.iter().find(|t| t.policy_version != version) {
        return Err(RlError::StalePolicy {
            trace: stale.policy_version,
            model: version,
        });
    }
    let (surrogate, grads) = surrogate_and_grad(model, traces, cfg)?;
    let mut next = model.params().clone();
    next.add_scaled(&grads, F::of(alpha));
    if !next.all_finite() {
        return Err(RlError::NonFinite);
    }
    *model.params_mut() = next;

    let steps: Vec<_> = traces.iter().flat_map(|t| &t.steps).collect();
    let n_steps = steps.len().max(1) as f64;
    Ok(StepReport {
        version_before: version,
        version_after: model.version(),
        traces: traces.len(),
        steps: steps.len(),
        mean_total_reward: traces.iter().map(|t| t.total_reward).sum::<f64>() / traces.len() as f64,
        mean_entropy: steps.iter().map(|s| s.entropy).sum::<f64>() / n_steps,
        hit_rate: steps.iter().filter(|s| s.hit()).count() as f64 / n_steps,
        baseline: baseline(traces, cfg.baseline),
        surrogate,
        grad_norm: grads.l2_norm().to_f64().unwrap_or(f64::NAN),
    })
}

/// `cfg.episodes` rounds of rollout over `sequences` followed by one policy
/// update each. Traces are optionally appended to `dump`.
pub fn finetune<F: Scalar>(
    model: &mut LanguageModel<F>,
    sequences: &[LogKeySequence],
    cfg: &RewardConfig,
    seed: u64,
    mut dump: Option<&mut dyn Write>,
) -> Result<Vec<StepReport>, RlError> {
    cfg.validate()?;
    if sequences.iter().all(|s| s.len() < 2) {
        return Err(RlError::EmptyTraces);
    }
    let mut reports = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        let traces = run_episode(model, sequences, cfg, seed.wrapping_add(episode as u64))?;
        if let Some(out) = dump.as_deref_mut() {
            write_trace_dump(out, episode, &traces)?;
        }
        let report = policy_gradient_step(model, &traces, cfg, cfg.learning_rate)?;
        log::info!(
            "episode {episode}: mean reward {:.4}, hit rate {:.4}, |grad| {:.3e}",
            report.mean_total_reward,
            report.hit_rate,
            report.grad_norm
        );
        reports.push(report);
    }
    Ok(reports)
}
