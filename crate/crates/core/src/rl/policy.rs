use rand::Rng;

use crate::lm::Scalar;

use super::RlError;

/// Indices of the `k` most probable keys, most probable first.
///
/// Ties go to the lower key index so the set is deterministic.
pub fn top_k_candidates<F: Scalar>(dist: &[F], k: usize) -> Result<Vec<usize>, RlError> {
    if k == 0 || k > dist.len() {
        return Err(RlError::KOutOfRange { k, keys: dist.len() });
    }
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    idx.sort_by(|&a, &b| {
        dist[b]
            .partial_cmp(&dist[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    Ok(idx)
}

/// An action drawn from the Top-K truncated distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledAction {
    pub action: usize,
    /// Log of the truncated, renormalized probability of `action`.
    pub log_prob: f64,
    pub candidates: Vec<usize>,
}

/// Zero everything outside the Top-K set, renormalize and sample.
pub fn sample_action<F: Scalar, R: Rng + ?Sized>(
    dist: &[F],
    k: usize,
    rng: &mut R,
) -> Result<SampledAction, RlError> {
    let candidates = top_k_candidates(dist, k)?;
    let weights: Vec<f64> = candidates
        .iter()
        .map(|&c| dist[c].to_f64().unwrap_or(0.0))
        .collect();
    let total: f64 = weights.iter().sum();
    let mut pick = 0;
    if candidates.len() > 1 {
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        pick = candidates.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = i;
                break;
            }
        }
    }
    let log_prob = if candidates.len() == 1 {
        0.0
    } else {
        (weights[pick] / total).ln()
    };
    Ok(SampledAction {
        action: candidates[pick],
        log_prob,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn top_k_examples() {
        let p = [0.5f64, 0.3, 0.2];
        assert_eq!(top_k_candidates(&p, 2).unwrap(), vec![0, 1]);
        assert_eq!(top_k_candidates(&p, 1).unwrap(), vec![0]);
        let mut all = top_k_candidates(&p, 3).unwrap();
        all.sort();
        assert_eq!(all, vec![0, 1, 2]);
        assert!(matches!(
            top_k_candidates(&p, 0),
            Err(RlError::KOutOfRange { k: 0, keys: 3 })
        ));
        assert!(top_k_candidates(&p, 4).is_err());
    }

    #[test]
    fn ties_prefer_lower_index() {
        let p = [0.1f32, 0.3, 0.3, 0.3];
        assert_eq!(top_k_candidates(&p, 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn k_one_is_argmax_with_zero_log_prob() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = sample_action(&[0.2f64, 0.7, 0.1], 1, &mut rng).unwrap();
        assert_eq!(s.action, 1);
        assert_eq!(s.log_prob, 0.0);
    }

    #[test]
    fn uniform_truncation_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_action(&[0.25f64; 4], 2, &mut rng).unwrap();
        assert!(s.candidates == vec![0, 1]);
        assert!(s.action < 2);
        assert!((s.log_prob - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sampling_frequencies_within_three_sigma() {
        let dist = [0.05f64, 0.4, 0.1, 0.25, 0.2];
        let k = 3;
        let cands = top_k_candidates(&dist, k).unwrap();
        let total: f64 = cands.iter().map(|&c| dist[c]).sum();
        let mut counts = [0usize; 5];
        let draws = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..draws {
            counts[sample_action(&dist, k, &mut rng).unwrap().action] += 1;
        }
        for key in 0..5 {
            let q = if cands.contains(&key) { dist[key] / total } else { 0.0 };
            let sigma = (draws as f64 * q * (1.0 - q)).sqrt();
            let diff = (counts[key] as f64 - draws as f64 * q).abs();
            assert!(diff <= 3.0 * sigma, "key {key}: {} vs {}", counts[key], draws as f64 * q);
        }
    }
}
