use serde::{Deserialize, Serialize};

use super::params::Parameters;
use super::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Descent optimizer state.
#[derive(Debug, Clone)]
pub enum Optimizer<F> {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
        step: i32,
        m: Parameters<F>,
        v: Parameters<F>,
    },
}

impl<F: Scalar> Optimizer<F> {
    pub fn new(kind: OptimizerKind, like: &Parameters<F>) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam { beta1, beta2, eps } => Optimizer::Adam {
                beta1,
                beta2,
                eps,
                step: 0,
                m: like.zeros_like(),
                v: like.zeros_like(),
            },
        }
    }

    /// One descent step: `params -= lr * update(grads)`.
    pub fn step(&mut self, params: &mut Parameters<F>, grads: &Parameters<F>, lr: f64) {
        match self {
            Optimizer::Sgd => params.add_scaled(grads, F::of(-lr)),
            Optimizer::Adam {
                beta1,
                beta2,
                eps,
                step,
                m,
                v,
            } => {
                *step += 1;
                let (b1, b2) = (F::of(*beta1), F::of(*beta2));
                let c1 = F::one() - b1.powi(*step);
                let c2 = F::one() - b2.powi(*step);
                let lr = F::of(lr);
                let eps = F::of(*eps);
                for (((p, g), mt), vt) in params
                    .tensors
                    .iter_mut()
                    .zip(&grads.tensors)
                    .zip(&mut m.tensors)
                    .zip(&mut v.tensors)
                {
                    for i in 0..p.data.len() {
                        let gi = g.data[i];
                        mt.data[i] = b1 * mt.data[i] + (F::one() - b1) * gi;
                        vt.data[i] = b2 * vt.data[i] + (F::one() - b2) * gi * gi;
                        let mhat = mt.data[i] / c1;
                        let vhat = vt.data[i] / c2;
                        p.data[i] = p.data[i] - lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
    }
}
