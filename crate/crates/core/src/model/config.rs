use serde::{Deserialize, Serialize};

use super::ModelError;

/// Architecture hyperparameters of the decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Key/value heads; each serves `n_heads / n_kv_groups` query heads.
    pub n_kv_groups: usize,
    pub ffn_hidden: usize,
    pub vocab_size: usize,
    pub max_context: usize,
    pub rope_theta: f64,
    /// Position ids are divided by this before the rotary angle is taken.
    pub shrink_factor: f64,
    pub norm_eps: f64,
}

impl ModelConfig {
    /// 768-wide, 12-layer, 2048-hidden decoder with an 8192 context reached
    /// through a shrink factor of 32.
    pub fn base(vocab_size: usize) -> Self {
        Self {
            dim: 768,
            n_layers: 12,
            n_heads: 12,
            n_kv_groups: 12,
            ffn_hidden: 2048,
            vocab_size,
            max_context: 8192,
            rope_theta: 10_000.0,
            shrink_factor: 32.0,
            norm_eps: 1e-5,
        }
    }

    /// Small CPU-trainable configuration.
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            dim: 64,
            n_layers: 2,
            n_heads: 4,
            n_kv_groups: 2,
            ffn_hidden: 128,
            vocab_size,
            max_context: 256,
            rope_theta: 10_000.0,
            shrink_factor: 1.0,
            norm_eps: 1e-5,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.n_heads
    }

    /// Width of the key and value projections.
    pub fn kv_dim(&self) -> usize {
        self.n_kv_groups * self.head_dim()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.dim == 0 || self.n_heads == 0 || self.vocab_size == 0 || self.ffn_hidden == 0 || self.max_context == 0 {
            return fail(format!("zero-sized dimension in {self:?}"));
        }
        if !self.dim.is_multiple_of(self.n_heads) {
            return fail(format!("dim {} not divisible by {} heads", self.dim, self.n_heads));
        }
        if !self.head_dim().is_multiple_of(2) {
            return fail(format!("head_dim {} must be even for rotary pairs", self.head_dim()));
        }
        if self.n_kv_groups == 0 || self.n_kv_groups > self.n_heads || !self.n_heads.is_multiple_of(self.n_kv_groups) {
            return fail(format!("{} kv groups incompatible with {} heads", self.n_kv_groups, self.n_heads));
        }
        if !(self.shrink_factor >= 1.0) || !self.shrink_factor.is_finite() {
            return fail(format!("shrink_factor must be >= 1, got {}", self.shrink_factor));
        }
        if !(self.norm_eps > 0.0) || !(self.rope_theta > 0.0) {
            return fail("norm_eps and rope_theta must be positive".into());
        }
        Ok(())
    }
}

/// Number of trainable values; the tied embedding/output matrix counts once.
pub fn param_count(config: &ModelConfig) -> usize {
    let d = config.dim;
    let per_layer = 2 * d + 2 * d * d + 2 * d * config.kv_dim() + 3 * d * config.ffn_hidden;
    config.vocab_size * d + config.n_layers * per_layer + d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_only_inventory() {
        let mut c = ModelConfig::tiny(10);
        c.dim = 4;
        c.n_heads = 2;
        c.n_kv_groups = 1;
        c.n_layers = 0;
        assert_eq!(param_count(&c), 44);
        let base = param_count(&c);
        c.vocab_size = 20;
        assert_eq!(param_count(&c) - base, 4 * 10);
    }

    #[test]
    fn base_is_about_97_million() {
        let n = param_count(&ModelConfig::base(15_575));
        assert_eq!(n, 96_915_456);
        assert!((90_000_000..=100_000_000).contains(&n));
        let mut four_groups = ModelConfig::base(15_575);
        four_groups.n_kv_groups = 4;
        assert_eq!(param_count(&four_groups), 87_478_272);
    }

    #[test]
    fn validation() {
        assert!(ModelConfig::base(15_575).validate().is_ok());
        assert!(ModelConfig::tiny(300).validate().is_ok());
        let mut c = ModelConfig::tiny(300);
        c.n_kv_groups = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::tiny(300);
        c.dim = 12;
        c.n_heads = 4;
        assert!(c.validate().is_err(), "odd head_dim");
        let mut c = ModelConfig::tiny(300);
        c.shrink_factor = 0.5;
        assert!(c.validate().is_err());
    }
}
