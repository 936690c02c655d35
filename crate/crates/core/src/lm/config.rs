use serde::{Deserialize, Serialize};

use super::vocab::SPECIAL_COUNT;
use super::LmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionEncoding {
    /// Rotary embedding applied to queries and keys.
    #[default]
    Rope,
    /// Learned absolute position table added to the token embedding.
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedForwardKind {
    /// `W_down (silu(x W_gate) * x W_up)`
    #[default]
    SwiGlu,
    /// `W_down gelu(x W_in)`
    Gelu,
}

fn default_init_std() -> f64 {
    0.02
}

fn default_norm_eps() -> f64 {
    1e-5
}

fn default_rope_base() -> f64 {
    10_000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_context: usize,
    /// Log keys plus the special tokens.
    pub vocab_size: usize,
    pub precision: Precision,
    #[serde(default)]
    pub positional: PositionEncoding,
    #[serde(default)]
    pub feed_forward: FeedForwardKind,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    #[serde(default = "default_norm_eps")]
    pub norm_eps: f64,
    #[serde(default = "default_rope_base")]
    pub rope_base: f64,
}

impl ModelConfig {
    /// Small default: 2 layers, 2 heads, width 32.
    pub fn toy(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 32,
            d_ff: 64,
            max_context: 128,
            vocab_size,
            precision: Precision::F32,
            positional: PositionEncoding::Rope,
            feed_forward: FeedForwardKind::SwiGlu,
            init_std: default_init_std(),
            norm_eps: default_norm_eps(),
            rope_base: default_rope_base(),
        }
    }

    /// 18 layers, 12 heads, width 60 (head width 5; the last channel of
    /// each head is left unrotated).
    pub fn full_profile(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_layers: 18,
            n_heads: 12,
            d_model: 60,
            d_ff: 160,
            ..ModelConfig::toy(vocab_size)
        }
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn key_count(&self) -> usize {
        self.vocab_size.saturating_sub(SPECIAL_COUNT)
    }

    pub fn validate(&self) -> Result<(), LmError> {
        let bad = |m: String| Err(LmError::InvalidConfig(m));
        if self.n_layers == 0 {
            return bad("n_layers must be positive".into());
        }
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.d_ff == 0 {
            return bad("d_ff must be positive".into());
        }
        if self.max_context < 2 {
            return bad("max_context must be at least 2".into());
        }
        if self.vocab_size < SPECIAL_COUNT + 1 {
            return bad(format!(
                "vocab_size {} leaves no room for a log key after {SPECIAL_COUNT} specials",
                self.vocab_size
            ));
        }
        if !(self.init_std > 0.0 && self.norm_eps > 0.0 && self.rope_base > 1.0) {
            return bad("init_std, norm_eps and rope_base must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ModelConfig::toy(8).validate().is_ok());
        assert!(ModelConfig::full_profile(8).validate().is_ok());
        assert_eq!(ModelConfig::full_profile(8).head_dim(), 5);
        let mut c = ModelConfig::toy(8);
        c.n_heads = 3;
        assert!(c.validate().is_err());
        assert!(ModelConfig::toy(3).validate().is_err());
        let mut c = ModelConfig::toy(8);
        c.max_context = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn serde_defaults_fill_architecture_knobs() {
        let text = r#"{"n_layers":1,"n_heads":1,"d_model":4,"d_ff":4,"max_context":8,"vocab_size":5,"precision":"f64"}"#;
        let c: ModelConfig = serde_json::from_str(text).unwrap();
        assert_eq!(c.positional, PositionEncoding::Rope);
        assert_eq!(c.feed_forward, FeedForwardKind::SwiGlu);
        assert_eq!(c.init_std, 0.02);
    }
}
