//! Row-major dense kernels with hand-written backward passes.

use super::scalar::Scalar;

/// `a[m×k] · b[k×n]`
pub fn matmul<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x == F::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &w) in row.iter_mut().zip(brow) {
                *o = *o + x * w;
            }
        }
    }
    out
}

/// `dy[m×n] · w[k×n]ᵀ`, accumulated into `out[m×k]`.
pub fn matmul_bt_acc<F: Scalar>(dy: &[F], w: &[F], m: usize, n: usize, k: usize, out: &mut [F]) {
    debug_assert_eq!(out.len(), m * k);
    for i in 0..m {
        let drow = &dy[i * n..(i + 1) * n];
        for p in 0..k {
            let wrow = &w[p * n..(p + 1) * n];
            let mut acc = F::zero();
            for (&g, &x) in drow.iter().zip(wrow) {
                acc = acc + g * x;
            }
            out[i * k + p] = out[i * k + p] + acc;
        }
    }
}

/// `dw[k×n] += x[m×k]ᵀ · dy[m×n]`
pub fn matmul_at_acc<F: Scalar>(x: &[F], dy: &[F], m: usize, k: usize, n: usize, dw: &mut [F]) {
    debug_assert_eq!(dw.len(), k * n);
    for i in 0..m {
        let drow = &dy[i * n..(i + 1) * n];
        for p in 0..k {
            let xv = x[i * k + p];
            if xv == F::zero() {
                continue;
            }
            let dwrow = &mut dw[p * n..(p + 1) * n];
            for (o, &g) in dwrow.iter_mut().zip(drow) {
                *o = *o + xv * g;
            }
        }
    }
}

/// RMS normalization of each row; returns the output and per-row `1/rms`.
pub fn rmsnorm<F: Scalar>(x: &[F], gain: &[F], rows: usize, eps: F) -> (Vec<F>, Vec<F>) {
    let d = gain.len();
    let mut out = vec![F::zero(); rows * d];
    let mut inv = vec![F::zero(); rows];
    let dn = F::of(d as f64);
    for t in 0..rows {
        let xr = &x[t * d..(t + 1) * d];
        let ms = xr.iter().map(|&v| v * v).sum::<F>() / dn;
        let r = (ms + eps).sqrt().recip();
        inv[t] = r;
        for ((o, &v), &g) in out[t * d..(t + 1) * d].iter_mut().zip(xr).zip(gain) {
            *o = v * r * g;
        }
    }
    (out, inv)
}

/// Backward of [`rmsnorm`]: accumulates into `dx` and `dgain`.
pub fn rmsnorm_backward<F: Scalar>(
    x: &[F],
    gain: &[F],
    inv: &[F],
    dy: &[F],
    dx: &mut [F],
    dgain: &mut [F],
) {
    let d = gain.len();
    let dn = F::of(d as f64);
    for (t, &r) in inv.iter().enumerate() {
        let xr = &x[t * d..(t + 1) * d];
        let dyr = &dy[t * d..(t + 1) * d];
        let mut dot = F::zero();
        for j in 0..d {
            dot = dot + gain[j] * dyr[j] * xr[j];
            dgain[j] = dgain[j] + dyr[j] * xr[j] * r;
        }
        let c = r * r * r * dot / dn;
        for j in 0..d {
            dx[t * d + j] = dx[t * d + j] + r * gain[j] * dyr[j] - c * xr[j];
        }
    }
}

#[inline]
pub fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

#[inline]
pub fn silu<F: Scalar>(x: F) -> F {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad<F: Scalar>(x: F) -> F {
    let s = sigmoid(x);
    s * (F::one() + x * (F::one() - s))
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh approximation of GELU.
#[inline]
pub fn gelu<F: Scalar>(x: F) -> F {
    let c = F::of(GELU_C);
    let a = F::of(0.044715);
    let half = F::of(0.5);
    half * x * (F::one() + (c * (x + a * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad<F: Scalar>(x: F) -> F {
    let c = F::of(GELU_C);
    let a = F::of(0.044715);
    let half = F::of(0.5);
    let u = c * (x + a * x * x * x);
    let th = u.tanh();
    let du = c * (F::one() + F::of(3.0) * a * x * x);
    half * (F::one() + th) + half * x * (F::one() - th * th) * du
}

/// Softmax over `logits[range]` of one row, written into `out`.
pub fn softmax_into<F: Scalar>(logits: &[F], out: &mut [F]) {
    let max = logits.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
    let mut sum = F::zero();
    for (o, &v) in out.iter_mut().zip(logits) {
        *o = (v - max).exp();
        sum = sum + *o;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
}

/// Precomputed cos/sin tables for rotary embedding of channel pairs
/// `(2i, 2i+1)` inside each head. An odd trailing channel is not rotated.
#[derive(Debug, Clone)]
pub struct Rope<F> {
    pairs: usize,
    cos: Vec<F>,
    sin: Vec<F>,
}

impl<F: Scalar> Rope<F> {
    pub fn new(head_dim: usize, max_context: usize, base: f64) -> Self {
        let pairs = head_dim / 2;
        let mut cos = Vec::with_capacity(max_context * pairs);
        let mut sin = Vec::with_capacity(max_context * pairs);
        for t in 0..max_context {
            for i in 0..pairs {
                let freq = base.powf(-2.0 * i as f64 / head_dim as f64);
                let angle = t as f64 * freq;
                cos.push(F::of(angle.cos()));
                sin.push(F::of(angle.sin()));
            }
        }
        Rope { pairs, cos, sin }
    }

    /// Rotate every head of a `[rows × n_heads*head_dim]` matrix in place.
    /// `inverse` applies the transpose rotation (the backward pass).
    pub fn apply(&self, x: &mut [F], rows: usize, n_heads: usize, head_dim: usize, inverse: bool) {
        let d = n_heads * head_dim;
        for t in 0..rows {
            let cs = &self.cos[t * self.pairs..(t + 1) * self.pairs];
            let sn = &self.sin[t * self.pairs..(t + 1) * self.pairs];
            for h in 0..n_heads {
                let base = t * d + h * head_dim;
                for i in 0..self.pairs {
                    let (c, mut s) = (cs[i], sn[i]);
                    if inverse {
                        s = -s;
                    }
                    let a = x[base + 2 * i];
                    let b = x[base + 2 * i + 1];
                    x[base + 2 * i] = a * c - b * s;
                    x[base + 2 * i + 1] = a * s + b * c;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        assert_eq!(matmul(&a, &b, 2, 2, 2), vec![19.0, 22.0, 43.0, 50.0]);
        let mut out = vec![0.0; 4];
        matmul_bt_acc(&a, &b, 2, 2, 2, &mut out);
        assert_eq!(out, vec![17.0, 23.0, 39.0, 53.0]);
        let mut dw = vec![0.0; 4];
        matmul_at_acc(&a, &b, 2, 2, 2, &mut dw);
        assert_eq!(dw, vec![26.0, 30.0, 38.0, 44.0]);
    }

    #[test]
    fn rope_inverse_round_trips_and_preserves_norm() {
        let rope: Rope<f64> = Rope::new(5, 8, 10_000.0);
        let orig: Vec<f64> = (0..8 * 10).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut x = orig.clone();
        rope.apply(&mut x, 8, 2, 5, false);
        for t in 0..8 {
            for h in 0..2 {
                let s = t * 10 + h * 5;
                let n0: f64 = orig[s..s + 5].iter().map(|v| v * v).sum();
                let n1: f64 = x[s..s + 5].iter().map(|v| v * v).sum();
                assert!((n0 - n1).abs() < 1e-12);
                // odd channel passes through
                assert_eq!(x[s + 4], orig[s + 4]);
            }
        }
        rope.apply(&mut x, 8, 2, 5, true);
        for (a, b) in x.iter().zip(&orig) {
            assert!((a - b).abs() < 1e-12);
        }
        // position 0 is the identity
        let mut y = orig[..10].to_vec();
        rope.apply(&mut y, 1, 2, 5, false);
        assert_eq!(&y[..], &orig[..10]);
    }

    #[test]
    fn activation_derivatives() {
        for &x in &[-3.0f64, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let ds = (silu(x + h) - silu(x - h)) / (2.0 * h);
            let dg = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((ds - silu_grad(x)).abs() < 1e-8);
            assert!((dg - gelu_grad(x)).abs() < 1e-8);
        }
    }
}
