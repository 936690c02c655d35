use super::config::{FeedForwardKind, ModelConfig};
use super::ops::{self, Rope};
use super::params::{Layout, Parameters};
use super::scalar::Scalar;
use super::vocab::Vocabulary;
use super::LmError;

/// Row-major `[rows × cols]` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<F> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

impl<F> Logits<F> {
    pub fn row(&self, t: usize) -> &[F] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }
}

struct LayerCache<F> {
    x_in: Vec<F>,
    inv1: Vec<F>,
    h1: Vec<F>,
    q: Vec<F>,
    k: Vec<F>,
    v: Vec<F>,
    /// `[heads × T × T]`, zero above the diagonal.
    att: Vec<F>,
    ctx: Vec<F>,
    x_mid: Vec<F>,
    inv2: Vec<F>,
    h2: Vec<F>,
    a: Vec<F>,
    b: Vec<F>,
    m: Vec<F>,
}

/// Activations kept from a forward pass for the backward pass.
pub struct ForwardCache<F> {
    keys: Vec<usize>,
    layers: Vec<LayerCache<F>>,
    x_final: Vec<F>,
    inv_f: Vec<F>,
    h_f: Vec<F>,
}

/// Decoder-only transformer over log keys.
///
/// Pre-norm blocks with RMS normalization, causal multi-head attention
/// (rotary positions by default) and a gated feed-forward layer. The
/// `version` counter increments on every parameter update so that
/// rollouts can be tied to the parameters that produced them.
#[derive(Debug, Clone)]
pub struct LanguageModel<F> {
    config: ModelConfig,
    vocab: Vocabulary,
    params: Parameters<F>,
    layout: Layout,
    rope: Rope<F>,
    version: u64,
}

impl<F: Scalar> LanguageModel<F> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, LmError> {
        config.validate()?;
        if config.precision != F::PRECISION {
            return Err(LmError::InvalidConfig(format!(
                "config asks for {:?} parameters but the model is {:?}",
                config.precision,
                F::PRECISION
            )));
        }
        let params = Parameters::init(&config, seed);
        Self::from_parameters(config, params, 0)
    }

    pub fn from_parameters(config: ModelConfig, params: Parameters<F>, version: u64) -> Result<Self, LmError> {
        config.validate()?;
        let expected = Parameters::<F>::zeros(&config);
        if expected.tensors.len() != params.tensors.len()
            || expected
                .tensors
                .iter()
                .zip(&params.tensors)
                .any(|(e, p)| e.name != p.name || e.shape != p.shape || p.data.len() != e.data.len())
        {
            return Err(LmError::ShapeMismatch);
        }
        let layout = Parameters::<F>::layout(&config);
        let rope = Rope::new(config.head_dim(), config.max_context, config.rope_base);
        Ok(LanguageModel {
            vocab: Vocabulary::new(config.key_count()),
            config,
            params,
            layout,
            rope,
            version,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &Parameters<F> {
        &self.params
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Mutable parameter access; bumps the version counter.
    pub fn params_mut(&mut self) -> &mut Parameters<F> {
        self.version += 1;
        &mut self.params
    }

    pub(crate) fn check_input(&self, keys: &[usize]) -> Result<(), LmError> {
        if keys.is_empty() {
            return Err(LmError::EmptyInput);
        }
        if keys.len() > self.config.max_context {
            return Err(LmError::ContextOverflow {
                len: keys.len(),
                max: self.config.max_context,
            });
        }
        if let Some(&bad) = keys.iter().find(|&&k| k >= self.config.vocab_size) {
            return Err(LmError::IndexOutOfVocab {
                index: bad,
                vocab: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Logits for every position; row `t` depends only on `keys[..=t]`.
    pub fn forward(&self, keys: &[usize]) -> Result<Logits<F>, LmError> {
        self.forward_cached(keys).map(|(l, _)| l)
    }

    pub fn forward_cached(&self, keys: &[usize]) -> Result<(Logits<F>, ForwardCache<F>), LmError> {
        self.check_input(keys)?;
        let c = &self.config;
        let (t_len, d, f, v) = (keys.len(), c.d_model, c.d_ff, c.vocab_size);
        let (nh, hd) = (c.n_heads, c.head_dim());
        let eps = F::of(c.norm_eps);
        let scale = F::of(1.0 / (hd as f64).sqrt());
        let p = &self.params.tensors;

        let emb = &p[self.layout.tok_emb].data;
        let mut x = vec![F::zero(); t_len * d];
        for (t, &k) in keys.iter().enumerate() {
            x[t * d..(t + 1) * d].copy_from_slice(&emb[k * d..(k + 1) * d]);
        }
        if let Some(pi) = self.layout.pos_emb {
            let pos = &p[pi].data;
            for (xv, &pv) in x.iter_mut().zip(&pos[..t_len * d]) {
                *xv = *xv + pv;
            }
        }

        let mut layers = Vec::with_capacity(c.n_layers);
        for slots in &self.layout.layers {
            let x_in = x;
            let (h1, inv1) = ops::rmsnorm(&x_in, &p[slots.attn_norm].data, t_len, eps);
            let mut q = ops::matmul(&h1, &p[slots.wq].data, t_len, d, d);
            let mut k = ops::matmul(&h1, &p[slots.wk].data, t_len, d, d);
            let v_ = ops::matmul(&h1, &p[slots.wv].data, t_len, d, d);
            if self.layout.pos_emb.is_none() {
                self.rope.apply(&mut q, t_len, nh, hd, false);
                self.rope.apply(&mut k, t_len, nh, hd, false);
            }

            let mut att = vec![F::zero(); nh * t_len * t_len];
            let mut ctx = vec![F::zero(); t_len * d];
            let mut scores = vec![F::zero(); t_len];
            for h in 0..nh {
                let off = h * hd;
                for t in 0..t_len {
                    let qt = &q[t * d + off..t * d + off + hd];
                    for s in 0..=t {
                        let ks = &k[s * d + off..s * d + off + hd];
                        scores[s] = qt.iter().zip(ks).map(|(&a, &b)| a * b).sum::<F>() * scale;
                    }
                    let row = &mut att[(h * t_len + t) * t_len..(h * t_len + t) * t_len + t + 1];
                    ops::softmax_into(&scores[..=t], row);
                    let out = &mut ctx[t * d + off..t * d + off + hd];
                    for (s, &w) in row.iter().enumerate() {
                        let vs = &v_[s * d + off..s * d + off + hd];
                        for (o, &vv) in out.iter_mut().zip(vs) {
                            *o = *o + w * vv;
                        }
                    }
                }
            }
            let o = ops::matmul(&ctx, &p[slots.wo].data, t_len, d, d);
            let x_mid: Vec<F> = x_in.iter().zip(&o).map(|(&a, &b)| a + b).collect();

            let (h2, inv2) = ops::rmsnorm(&x_mid, &p[slots.ffn_norm].data, t_len, eps);
            let a = ops::matmul(&h2, &p[slots.w_in].data, t_len, d, f);
            let (b, m): (Vec<F>, Vec<F>) = match slots.w_up {
                Some(up) => {
                    let b = ops::matmul(&h2, &p[up].data, t_len, d, f);
                    let m = a.iter().zip(&b).map(|(&ai, &bi)| ops::silu(ai) * bi).collect::<Vec<F>>();
                    (b, m)
                }
                None => (Vec::new(), a.iter().map(|&ai| ops::gelu(ai)).collect()),
            };
            let ff = ops::matmul(&m, &p[slots.w_down].data, t_len, f, d);
            x = x_mid.iter().zip(&ff).map(|(&a, &b)| a + b).collect();

            layers.push(LayerCache {
                x_in,
                inv1,
                h1,
                q,
                k,
                v: v_,
                att,
                ctx,
                x_mid,
                inv2,
                h2,
                a,
                b,
                m,
            });
        }

        let (h_f, inv_f) = ops::rmsnorm(&x, &p[self.layout.final_norm].data, t_len, eps);
        let logits = ops::matmul(&h_f, &p[self.layout.head].data, t_len, d, v);
        Ok((
            Logits {
                rows: t_len,
                cols: v,
                data: logits,
            },
            ForwardCache {
                keys: keys.to_vec(),
                layers,
                x_final: x,
                inv_f,
                h_f,
            },
        ))
    }

    /// Accumulate parameter gradients for an upstream gradient on the logits.
    pub fn backward(&self, cache: &ForwardCache<F>, dlogits: &[F], grads: &mut Parameters<F>) {
        let c = &self.config;
        let t_len = cache.keys.len();
        let (d, f, v) = (c.d_model, c.d_ff, c.vocab_size);
        let (nh, hd) = (c.n_heads, c.head_dim());
        let scale = F::of(1.0 / (hd as f64).sqrt());
        let p = &self.params.tensors;
        let g = &mut grads.tensors;
        debug_assert_eq!(dlogits.len(), t_len * v);

        let lay = &self.layout;
        ops::matmul_at_acc(&cache.h_f, dlogits, t_len, d, v, &mut g[lay.head].data);
        let mut dh = vec![F::zero(); t_len * d];
        ops::matmul_bt_acc(dlogits, &p[lay.head].data, t_len, v, d, &mut dh);
        let mut dx = vec![F::zero(); t_len * d];
        ops::rmsnorm_backward(
            &cache.x_final,
            &p[lay.final_norm].data,
            &cache.inv_f,
            &dh,
            &mut dx,
            &mut g[lay.final_norm].data,
        );

        for (slots, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            // feed-forward
            ops::matmul_at_acc(&lc.m, &dx, t_len, f, d, &mut g[slots.w_down].data);
            let mut dm = vec![F::zero(); t_len * f];
            ops::matmul_bt_acc(&dx, &p[slots.w_down].data, t_len, d, f, &mut dm);
            let mut dh2 = vec![F::zero(); t_len * d];
            match (slots.w_up, c.feed_forward) {
                (Some(up), FeedForwardKind::SwiGlu) => {
                    let mut da = vec![F::zero(); t_len * f];
                    let mut db = vec![F::zero(); t_len * f];
                    for i in 0..t_len * f {
                        da[i] = dm[i] * lc.b[i] * ops::silu_grad(lc.a[i]);
                        db[i] = dm[i] * ops::silu(lc.a[i]);
                    }
                    ops::matmul_at_acc(&lc.h2, &da, t_len, d, f, &mut g[slots.w_in].data);
                    ops::matmul_at_acc(&lc.h2, &db, t_len, d, f, &mut g[up].data);
                    ops::matmul_bt_acc(&da, &p[slots.w_in].data, t_len, f, d, &mut dh2);
                    ops::matmul_bt_acc(&db, &p[up].data, t_len, f, d, &mut dh2);
                }
                _ => {
                    let da: Vec<F> = dm.iter().zip(&lc.a).map(|(&g, &a)| g * ops::gelu_grad(a)).collect();
                    ops::matmul_at_acc(&lc.h2, &da, t_len, d, f, &mut g[slots.w_in].data);
                    ops::matmul_bt_acc(&da, &p[slots.w_in].data, t_len, f, d, &mut dh2);
                }
            }
            let mut dx_mid = dx;
            ops::rmsnorm_backward(
                &lc.x_mid,
                &p[slots.ffn_norm].data,
                &lc.inv2,
                &dh2,
                &mut dx_mid,
                &mut g[slots.ffn_norm].data,
            );

            // attention
            ops::matmul_at_acc(&lc.ctx, &dx_mid, t_len, d, d, &mut g[slots.wo].data);
            let mut dctx = vec![F::zero(); t_len * d];
            ops::matmul_bt_acc(&dx_mid, &p[slots.wo].data, t_len, d, d, &mut dctx);
            let mut dq = vec![F::zero(); t_len * d];
            let mut dk = vec![F::zero(); t_len * d];
            let mut dv = vec![F::zero(); t_len * d];
            let mut datt = vec![F::zero(); t_len];
            for h in 0..nh {
                let off = h * hd;
                for t in 0..t_len {
                    let row = &lc.att[(h * t_len + t) * t_len..(h * t_len + t) * t_len + t + 1];
                    let dct = &dctx[t * d + off..t * d + off + hd];
                    let mut dot = F::zero();
                    for s in 0..=t {
                        let vs = &lc.v[s * d + off..s * d + off + hd];
                        datt[s] = dct.iter().zip(vs).map(|(&a, &b)| a * b).sum();
                        dot = dot + row[s] * datt[s];
                        let dvs = &mut dv[s * d + off..s * d + off + hd];
                        for (o, &gv) in dvs.iter_mut().zip(dct) {
                            *o = *o + row[s] * gv;
                        }
                    }
                    for s in 0..=t {
                        let ds = row[s] * (datt[s] - dot) * scale;
                        if ds == F::zero() {
                            continue;
                        }
                        for j in 0..hd {
                            dq[t * d + off + j] = dq[t * d + off + j] + ds * lc.k[s * d + off + j];
                            dk[s * d + off + j] = dk[s * d + off + j] + ds * lc.q[t * d + off + j];
                        }
                    }
                }
            }
            if lay.pos_emb.is_none() {
                self.rope.apply(&mut dq, t_len, nh, hd, true);
                self.rope.apply(&mut dk, t_len, nh, hd, true);
            }
            ops::matmul_at_acc(&lc.h1, &dq, t_len, d, d, &mut g[slots.wq].data);
            ops::matmul_at_acc(&lc.h1, &dk, t_len, d, d, &mut g[slots.wk].data);
            ops::matmul_at_acc(&lc.h1, &dv, t_len, d, d, &mut g[slots.wv].data);
            let mut dh1 = vec![F::zero(); t_len * d];
            ops::matmul_bt_acc(&dq, &p[slots.wq].data, t_len, d, d, &mut dh1);
            ops::matmul_bt_acc(&dk, &p[slots.wk].data, t_len, d, d, &mut dh1);
            ops::matmul_bt_acc(&dv, &p[slots.wv].data, t_len, d, d, &mut dh1);
            let mut dx_in = dx_mid;
            ops::rmsnorm_backward(
                &lc.x_in,
                &p[slots.attn_norm].data,
                &lc.inv1,
                &dh1,
                &mut dx_in,
                &mut g[slots.attn_norm].data,
            );
            dx = dx_in;
        }

        let demb = &mut g[lay.tok_emb].data;
        for (t, &k) in cache.keys.iter().enumerate() {
            for j in 0..d {
                demb[k * d + j] = demb[k * d + j] + dx[t * d + j];
            }
        }
        if let Some(pi) = lay.pos_emb {
            let dpos = &mut g[pi].data;
            for (o, &gv) in dpos[..t_len * d].iter_mut().zip(&dx) {
                *o = *o + gv;
            }
        }
    }
}
