use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{FeedForwardKind, ModelConfig, PositionEncoding};
use super::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    fn zeros(name: String, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            name,
            shape,
            data: vec![F::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Tensor indices of one transformer block.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerSlots {
    pub attn_norm: usize,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub ffn_norm: usize,
    /// Gate projection (SwiGLU) or input projection (GELU).
    pub w_in: usize,
    /// Up projection, SwiGLU only.
    pub w_up: Option<usize>,
    pub w_down: usize,
}

/// Where each named tensor lives inside [`Parameters::tensors`].
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub tok_emb: usize,
    pub pos_emb: Option<usize>,
    pub layers: Vec<LayerSlots>,
    pub final_norm: usize,
    pub head: usize,
}

enum Init {
    Normal,
    Ones,
}

fn specs(config: &ModelConfig) -> (Layout, Vec<(String, Vec<usize>, Init)>) {
    let d = config.d_model;
    let v = config.vocab_size;
    let f = config.d_ff;
    let mut specs = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| {
        specs.push((name, shape, init));
        specs.len() - 1
    };
    let tok_emb = push("tok_emb".into(), vec![v, d], Init::Normal);
    let pos_emb = match config.positional {
        PositionEncoding::Learned => {
            Some(push("pos_emb".into(), vec![config.max_context, d], Init::Normal))
        }
        PositionEncoding::Rope => None,
    };
    let mut layers = Vec::with_capacity(config.n_layers);
    for l in 0..config.n_layers {
        let p = |s: &str| format!("layers.{l}.{s}");
        let attn_norm = push(p("attn_norm"), vec![d], Init::Ones);
        let wq = push(p("wq"), vec![d, d], Init::Normal);
        let wk = push(p("wk"), vec![d, d], Init::Normal);
        let wv = push(p("wv"), vec![d, d], Init::Normal);
        let wo = push(p("wo"), vec![d, d], Init::Normal);
        let ffn_norm = push(p("ffn_norm"), vec![d], Init::Ones);
        let (w_in, w_up) = match config.feed_forward {
            FeedForwardKind::SwiGlu => {
                let g = push(p("w_gate"), vec![d, f], Init::Normal);
                let u = push(p("w_up"), vec![d, f], Init::Normal);
                (g, Some(u))
            }
            FeedForwardKind::Gelu => (push(p("w_in"), vec![d, f], Init::Normal), None),
        };
        let w_down = push(p("w_down"), vec![f, d], Init::Normal);
        layers.push(LayerSlots {
            attn_norm,
            wq,
            wk,
            wv,
            wo,
            ffn_norm,
            w_in,
            w_up,
            w_down,
        });
    }
    let final_norm = push("final_norm".into(), vec![d], Init::Ones);
    let head = push("head".into(), vec![d, v], Init::Normal);
    let layout = Layout {
        tok_emb,
        pos_emb,
        layers,
        final_norm,
        head,
    };
    (layout, specs)
}

/// The full parameter set, one tensor per named weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<F> {
    pub tensors: Vec<Tensor<F>>,
}

impl<F: Scalar> Parameters<F> {
    pub(crate) fn layout(config: &ModelConfig) -> Layout {
        specs(config).0
    }

    /// Normal(0, init_std) for matrices, ones for normalization gains.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, config.init_std).expect("positive std");
        let tensors = specs(config)
            .1
            .into_iter()
            .map(|(name, shape, init)| {
                let n: usize = shape.iter().product();
                let data = match init {
                    Init::Ones => vec![F::one(); n],
                    Init::Normal => (0..n).map(|_| F::of(normal.sample(&mut rng))).collect(),
                };
                Tensor { name, shape, data }
            })
            .collect();
        Parameters { tensors }
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        let tensors = specs(config)
            .1
            .into_iter()
            .map(|(name, shape, _)| Tensor::zeros(name, shape))
            .collect();
        Parameters { tensors }
    }

    pub fn zeros_like(&self) -> Self {
        Parameters {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.name.clone(), t.shape.clone()))
                .collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<F>> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`, tensor by tensor in a fixed order.
    pub fn add_scaled(&mut self, other: &Parameters<F>, scale: F) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x = *x + scale * y;
            }
        }
    }

    pub fn scale(&mut self, factor: F) {
        for t in &mut self.tensors {
            for x in &mut t.data {
                *x = *x * factor;
            }
        }
    }

    pub fn l2_norm(&self) -> F {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|&x| x * x)
            .sum::<F>()
            .sqrt()
    }
}
