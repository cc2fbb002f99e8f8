//! Decoder-only transformer: pre-norm RMSNorm blocks with rotary
//! grouped-query attention and SwiGLU feed-forward, tied embeddings.

mod config;
mod forward;
pub mod rope;
mod weights;

use thiserror::Error;

use crate::error::KernelError;

pub use config::{param_count, ModelConfig};
pub use forward::{attention_block, ffn_block, forward, forward_tape, gqa_attention, LayerVars, ParamVars};
pub use rope::{apply_rope, effective_positions};
pub use weights::{LayerWeights, ModelWeights, ParamRole};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("sequence of {len} tokens exceeds context {max}")]
    ContextOverflow { len: usize, max: usize },
    #[error("token id {id} outside vocabulary of {vocab}")]
    Index { id: usize, vocab: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;
    use crate::tensor::Tensor;

    #[test]
    fn whole_model_gradients_match_finite_differences() {
        let cfg = ModelConfig {
            dim: 8,
            n_layers: 2,
            n_heads: 2,
            n_kv_groups: 1,
            ffn_hidden: 12,
            vocab_size: 11,
            max_context: 16,
            rope_theta: 10_000.0,
            shrink_factor: 2.0,
            norm_eps: 1e-5,
        };
        let mut w = ModelWeights::init(&cfg, 21).unwrap();
        // Larger weights so every path carries a visible gradient.
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        w.visit_mut(|_, role, t| {
            let noise = Tensor::randn(t.shape(), 0.3, &mut rng);
            for (v, n) in t.data_mut().iter_mut().zip(noise.data()) {
                *v = if role == ParamRole::Norm { 1.0 + n } else { *n };
            }
        });
        let ids = [1usize, 4, 9, 2, 7, 3];
        let targets = [4usize, 9, 2, 7, 3, 0];
        let inputs: Vec<Tensor> = w.tensors().into_iter().cloned().collect();
        let check = grad_check(
            |tape, vars| {
                let layers = vars[1..vars.len() - 1]
                    .chunks(9)
                    .map(|c| LayerVars {
                        attn_norm: c[0],
                        wq: c[1],
                        wk: c[2],
                        wv: c[3],
                        wo: c[4],
                        ffn_norm: c[5],
                        w1: c[6],
                        w3: c[7],
                        w2: c[8],
                    })
                    .collect();
                let params = ParamVars { token_embedding: vars[0], layers, final_norm: vars[vars.len() - 1] };
                let logits = forward_tape(tape, &params, &cfg, &ids).map_err(|e| match e {
                    ModelError::Kernel(k) => k,
                    other => KernelError::Shape(other.to_string()),
                })?;
                Ok(tape.cross_entropy(logits, &targets, usize::MAX)?.0)
            },
            &inputs,
            1e-3,
        )
        .unwrap();
        assert!(check.passed(), "{check:?}");
    }
}
