use super::rope::sequence_positions;
use super::{LayerWeights, ModelConfig, ModelError, ModelWeights};
use crate::kernels::AttentionShape;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub struct LayerVars<'t> {
    pub attn_norm: Var<'t>,
    pub wq: Var<'t>,
    pub wk: Var<'t>,
    pub wv: Var<'t>,
    pub wo: Var<'t>,
    pub ffn_norm: Var<'t>,
    pub w1: Var<'t>,
    pub w3: Var<'t>,
    pub w2: Var<'t>,
}

/// Model parameters registered as tape leaves.
pub struct ParamVars<'t> {
    pub token_embedding: Var<'t>,
    pub layers: Vec<LayerVars<'t>>,
    pub final_norm: Var<'t>,
}

impl<'t> ParamVars<'t> {
    pub fn bind(tape: &'t Tape, w: &ModelWeights) -> Self {
        Self {
            token_embedding: tape.leaf(w.token_embedding.clone()),
            layers: w.layers.iter().map(|l| LayerVars::bind(tape, l)).collect(),
            final_norm: tape.leaf(w.final_norm.clone()),
        }
    }

    /// Leaves in [`ModelWeights::visit`] order.
    pub fn vars(&self) -> Vec<Var<'t>> {
        let mut v = vec![self.token_embedding];
        for l in &self.layers {
            v.extend([l.attn_norm, l.wq, l.wk, l.wv, l.wo, l.ffn_norm, l.w1, l.w3, l.w2]);
        }
        v.push(self.final_norm);
        v
    }
}

impl<'t> LayerVars<'t> {
    pub fn bind(tape: &'t Tape, l: &LayerWeights) -> Self {
        Self {
            attn_norm: tape.leaf(l.attn_norm.clone()),
            wq: tape.leaf(l.wq.clone()),
            wk: tape.leaf(l.wk.clone()),
            wv: tape.leaf(l.wv.clone()),
            wo: tape.leaf(l.wo.clone()),
            ffn_norm: tape.leaf(l.ffn_norm.clone()),
            w1: tape.leaf(l.w1.clone()),
            w3: tape.leaf(l.w3.clone()),
            w2: tape.leaf(l.w2.clone()),
        }
    }
}

fn attention_shape(config: &ModelConfig, causal: bool) -> AttentionShape {
    AttentionShape { n_heads: config.n_heads, n_kv_groups: config.n_kv_groups, head_dim: config.head_dim(), causal }
}

/// Grouped-query self-attention on already-normalized `x [T, dim]`.
pub fn attention_block<'t>(
    tape: &'t Tape,
    x: Var<'t>,
    layer: &LayerVars<'t>,
    config: &ModelConfig,
    positions: &[f64],
    causal: bool,
) -> Result<Var<'t>, ModelError> {
    let hd = config.head_dim();
    let q = tape.matmul(x, layer.wq)?;
    let k = tape.matmul(x, layer.wk)?;
    let v = tape.matmul(x, layer.wv)?;
    let q = tape.rope(q, positions, config.rope_theta, hd)?;
    let k = tape.rope(k, positions, config.rope_theta, hd)?;
    let heads = tape.attention(q, k, v, attention_shape(config, causal))?;
    Ok(tape.matmul(heads, layer.wo)?)
}

/// `(silu(x·W1) ⊙ (x·W3))·W2`.
pub fn ffn_block<'t>(tape: &'t Tape, x: Var<'t>, layer: &LayerVars<'t>) -> Result<Var<'t>, ModelError> {
    let gate = tape.silu(tape.matmul(x, layer.w1)?)?;
    let up = tape.matmul(x, layer.w3)?;
    Ok(tape.matmul(tape.mul(gate, up)?, layer.w2)?)
}

fn check_ids(config: &ModelConfig, ids: &[usize]) -> Result<(), ModelError> {
    if ids.is_empty() || ids.len() > config.max_context {
        return Err(ModelError::ContextOverflow { len: ids.len(), max: config.max_context });
    }
    if let Some(&id) = ids.iter().find(|&&id| id >= config.vocab_size) {
        return Err(ModelError::Index { id, vocab: config.vocab_size });
    }
    Ok(())
}

/// Records the decoder on `tape` and returns `[T, V]` logits.
pub fn forward_tape<'t>(
    tape: &'t Tape,
    params: &ParamVars<'t>,
    config: &ModelConfig,
    ids: &[usize],
) -> Result<Var<'t>, ModelError> {
    check_ids(config, ids)?;
    let positions = sequence_positions(ids.len(), config.shrink_factor);
    let mut x = tape.embedding(params.token_embedding, ids)?;
    for layer in &params.layers {
        let h = tape.rmsnorm(x, layer.attn_norm, config.norm_eps)?;
        x = tape.add(x, attention_block(tape, h, layer, config, &positions, true)?)?;
        let h = tape.rmsnorm(x, layer.ffn_norm, config.norm_eps)?;
        x = tape.add(x, ffn_block(tape, h, layer)?)?;
    }
    let x = tape.rmsnorm(x, params.final_norm, config.norm_eps)?;
    Ok(tape.matmul_bt(x, params.token_embedding)?)
}

/// Next-token logits `[T, V]` for every position of `ids`.
pub fn forward(weights: &ModelWeights, config: &ModelConfig, ids: &[usize]) -> Result<Tensor, ModelError> {
    let tape = Tape::new();
    let params = ParamVars::bind(&tape, weights);
    let logits = forward_tape(&tape, &params, config, ids)?;
    let out = logits.value().clone();
    Ok(out)
}

/// Attention sub-layer of one layer applied to `x [T, dim]`.
pub fn gqa_attention(
    x: &Tensor,
    layer: &LayerWeights,
    config: &ModelConfig,
    causal: bool,
) -> Result<Tensor, ModelError> {
    config.validate()?;
    let t = x.shape()[0];
    if t > config.max_context {
        return Err(ModelError::ContextOverflow { len: t, max: config.max_context });
    }
    let tape = Tape::new();
    let vars = LayerVars::bind(&tape, layer);
    let xv = tape.leaf(x.clone());
    let positions = sequence_positions(t, config.shrink_factor);
    let out = attention_block(&tape, xv, &vars, config, &positions, causal)?;
    let value = out.value().clone();
    Ok(value)
}
