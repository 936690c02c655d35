#![allow(dead_code)]

use logkey::lm::{LanguageModel, ModelConfig, Parameters, Precision, SPECIAL_COUNT};

/// Relative error with an absolute floor so coordinates whose gradient is
/// essentially zero are judged on absolute error (≤ 1e-10 passes 1e-4).
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub coords: usize,
}

/// Central finite differences of `loss` for every coordinate of every
/// tensor, compared against `analytic`.
pub fn finite_difference_check(
    model: &LanguageModel<f64>,
    analytic: &Parameters<f64>,
    h: f64,
    loss: impl Fn(&LanguageModel<f64>) -> f64 + Sync,
) -> Vec<TensorCheck> {
    use rayon::prelude::*;
    let mut out = Vec::new();
    for (ti, tensor) in model.params().tensors.iter().enumerate() {
        let errs: Vec<f64> = (0..tensor.data.len())
            .into_par_iter()
            .map(|i| {
                let mut probe = model.clone();
                let orig = probe.params().tensors[ti].data[i];
                probe.params_mut().tensors[ti].data[i] = orig + h;
                let up = loss(&probe);
                probe.params_mut().tensors[ti].data[i] = orig - h;
                let down = loss(&probe);
                let numeric = (up - down) / (2.0 * h);
                rel_err(analytic.tensors[ti].data[i], numeric)
            })
            .collect();
        out.push(TensorCheck {
            name: tensor.name.clone(),
            max_rel_err: errs.iter().cloned().fold(0.0, f64::max),
            coords: errs.len(),
        });
    }
    out
}

pub fn toy_f64(key_count: usize, d_model: usize) -> ModelConfig {
    let mut c = ModelConfig::toy(key_count + SPECIAL_COUNT).with_precision(Precision::F64);
    c.d_model = d_model;
    c.d_ff = 2 * d_model;
    c.max_context = 32;
    c
}

pub struct BanditRun {
    /// Probability of the rewarded arm before each update, then after the last.
    pub pi_rewarded: Vec<f64>,
    /// Mean reward of each update's batch.
    pub batch_reward: Vec<f64>,
}

/// Two-armed deterministic bandit: a single decision after the prefix `[0]`
/// over two keys, reward 1 for key 0 and 0 for key 1. Each policy update
/// uses `batch` sampled pulls.
pub fn run_bandit(seed: u64, updates: usize, batch: usize, lr: f64) -> BanditRun {
    use logkey::rl::{policy_gradient_step, sample_action, EpisodeTrace, RewardConfig, StepRecord};
    use rand::SeedableRng;

    let mut model: LanguageModel<f64> =
        LanguageModel::new(ModelConfig::toy(2 + SPECIAL_COUNT).with_precision(Precision::F64), seed).unwrap();
    let cfg = RewardConfig {
        entropy_coef: 0.0,
        ..RewardConfig::default()
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut run = BanditRun {
        pi_rewarded: Vec::with_capacity(updates + 1),
        batch_reward: Vec::with_capacity(updates),
    };
    for _ in 0..updates {
        let dist = model.next_key_distribution(&[0]).unwrap();
        run.pi_rewarded.push(dist[0]);
        let traces: Vec<EpisodeTrace> = (0..batch)
            .map(|i| {
                let s = sample_action(&dist, 2, &mut rng).unwrap();
                let step = StepRecord {
                    t: 0,
                    action: s.action,
                    log_prob: s.log_prob,
                    candidates: s.candidates,
                    true_key: 0,
                    anomalous: false,
                    reward: if s.action == 0 { 1.0 } else { 0.0 },
                    ret: 0.0,
                    entropy: 0.0,
                };
                EpisodeTrace::new(format!("pull{i}"), vec![0], model.version(), vec![step], 1.0)
            })
            .collect();
        run.batch_reward
            .push(traces.iter().map(|t| t.total_reward).sum::<f64>() / batch as f64);
        policy_gradient_step(&mut model, &traces, &cfg, lr).unwrap();
    }
    run.pi_rewarded.push(model.next_key_distribution(&[0]).unwrap()[0]);
    run
}
