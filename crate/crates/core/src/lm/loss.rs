//! Next-key objective and predictive distributions.
//!
//! The predictive distribution is a softmax over the log keys only; the
//! special tokens' logits never take part, so PAD/BOS/UNK carry no mass and
//! special-token targets are excluded from the loss.

use rayon::prelude::*;

use super::model::LanguageModel;
use super::params::Parameters;
use super::scalar::Scalar;
use super::LmError;

/// Softmax of `row[..key_count]`.
pub fn key_distribution<F: Scalar>(row: &[F], key_count: usize) -> Vec<F> {
    let mut out = vec![F::zero(); key_count];
    super::ops::softmax_into(&row[..key_count], &mut out);
    out
}

/// Log-softmax of `row[..key_count]`.
pub fn key_log_softmax<F: Scalar>(row: &[F], key_count: usize) -> Vec<F> {
    let keys = &row[..key_count];
    let max = keys.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
    let lse = keys.iter().map(|&v| (v - max).exp()).sum::<F>().ln() + max;
    keys.iter().map(|&v| v - lse).collect()
}

/// Shannon entropy (nats) of a probability vector.
pub fn entropy<F: Scalar>(p: &[F]) -> F {
    p.iter()
        .filter(|&&x| x > F::zero())
        .map(|&x| -x * x.ln())
        .sum()
}

impl<F: Scalar> LanguageModel<F> {
    fn target_count(&self, keys: &[usize]) -> usize {
        keys.iter().skip(1).filter(|&&k| self.vocab().is_key(k)).count()
    }

    /// Mean negative log-probability of each true next key given its prefix.
    pub fn nll_loss(&self, keys: &[usize]) -> Result<F, LmError> {
        let n = self.target_count(keys);
        if keys.len() < 2 || n == 0 {
            return Err(LmError::SequenceTooShort);
        }
        let logits = self.forward(keys)?;
        let kc = self.vocab().key_count;
        let mut total = F::zero();
        for t in 0..keys.len() - 1 {
            let target = keys[t + 1];
            if !self.vocab().is_key(target) {
                continue;
            }
            total = total - key_log_softmax(logits.row(t), kc)[target];
        }
        Ok(total / F::of(n as f64))
    }

    /// Mean loss over every prediction in the batch, its gradient, and the
    /// number of predictions averaged over.
    ///
    /// Per-sequence gradients are computed in parallel and summed in batch
    /// order, so the result does not depend on the thread count.
    pub fn loss_and_grad(&self, batch: &[&[usize]]) -> Result<(F, Parameters<F>, usize), LmError> {
        if batch.is_empty() {
            return Err(LmError::EmptyInput);
        }
        let mut n_total = 0usize;
        for keys in batch {
            let n = self.target_count(keys);
            if keys.len() < 2 || n == 0 {
                return Err(LmError::SequenceTooShort);
            }
            n_total += n;
        }
        let inv_n = F::of(1.0 / n_total as f64);
        let kc = self.vocab().key_count;
        let vsize = self.config().vocab_size;

        let parts: Vec<Result<(F, Parameters<F>), LmError>> = batch
            .par_iter()
            .map(|keys| {
                let (logits, cache) = self.forward_cached(keys)?;
                let mut dlogits = vec![F::zero(); logits.data.len()];
                let mut loss = F::zero();
                for t in 0..keys.len() - 1 {
                    let target = keys[t + 1];
                    if target >= kc {
                        continue;
                    }
                    let logp = key_log_softmax(logits.row(t), kc);
                    loss = loss - logp[target];
                    let p: Vec<F> = logp.iter().map(|&l| l.exp()).collect();
                    let row = &mut dlogits[t * vsize..t * vsize + kc];
                    for (j, (dst, &pj)) in row.iter_mut().zip(&p).enumerate() {
                        let ind = if j == target { F::one() } else { F::zero() };
                        *dst = (pj - ind) * inv_n;
                    }
                }
                let mut grads = self.params().zeros_like();
                self.backward(&cache, &dlogits, &mut grads);
                Ok((loss, grads))
            })
            .collect();

        let mut loss = F::zero();
        let mut grads = self.params().zeros_like();
        for part in parts {
            let (l, g) = part?;
            loss = loss + l;
            grads.add_scaled(&g, F::one());
        }
        Ok((loss * inv_n, grads, n_total))
    }

    /// Distribution of the key following `prefix`, renormalized over log keys.
    pub fn next_key_distribution(&self, prefix: &[usize]) -> Result<Vec<F>, LmError> {
        let logits = self.forward(prefix)?;
        Ok(key_distribution(logits.row(prefix.len() - 1), self.vocab().key_count))
    }

    /// `out[t]` is the distribution of `keys[t + 1]` given `keys[..=t]`,
    /// from a single causal forward pass.
    pub fn next_key_distributions(&self, keys: &[usize]) -> Result<Vec<Vec<F>>, LmError> {
        let logits = self.forward(keys)?;
        let kc = self.vocab().key_count;
        Ok((0..keys.len()).map(|t| key_distribution(logits.row(t), kc)).collect())
    }
}
