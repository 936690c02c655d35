use super::RewardConfig;

/// Top-K reward with entropy bonus, clipped to `[clip_min, clip_max]`.
///
/// | true key in Top-K | label     | base                          |
/// |-------------------|-----------|-------------------------------|
/// | yes               | normal    | +1                            |
/// | no                | anomalous | +1                            |
/// | no                | normal    | -1                            |
/// | yes               | anomalous | `cfg.match_anomalous_reward`  |
pub fn compute_reward(
    candidates: &[usize],
    true_key: usize,
    anomalous: bool,
    entropy: f64,
    cfg: &RewardConfig,
) -> f64 {
    debug_assert!(entropy >= 0.0);
    let hit = candidates.contains(&true_key);
    let base = match (hit, anomalous) {
        (true, false) | (false, true) => 1.0,
        (false, false) => -1.0,
        (true, true) => cfg.match_anomalous_reward,
    };
    (base + cfg.entropy_coef * entropy).clamp(cfg.clip_min, cfg.clip_max)
}

/// Discounted suffix sums `R_t = r_t + discount * R_{t+1}`.
pub fn compute_returns(rewards: &[f64], discount: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, &r) in rewards.iter().enumerate().rev() {
        acc = r + discount * acc;
        out[t] = acc;
    }
    out
}
