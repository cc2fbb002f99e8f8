use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TextgenError;
use crate::tokenizer::{TokenId, EOS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub top_p: f64,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub seed: u64,
    pub stop_ids: Vec<TokenId>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { top_p: 0.9, temperature: 1.0, max_new_tokens: 64, seed: 0, stop_ids: vec![EOS] }
    }
}

impl SamplerConfig {
    /// Always picks the most likely token.
    pub fn greedy(max_new_tokens: usize) -> Self {
        Self { top_p: 1e-9, temperature: 1.0, max_new_tokens, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), TextgenError> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(TextgenError::Config(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(TextgenError::Config(format!("temperature {} must be positive", self.temperature)));
        }
        Ok(())
    }
}

/// `softmax(logits / temperature)`. Entries at −∞ get probability zero.
pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Result<Vec<f64>, TextgenError> {
    if logits.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(TextgenError::Sampling("logits contain NaN or +inf".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(TextgenError::Sampling("every logit is -inf".into()));
    }
    let exp: Vec<f64> = logits.iter().map(|&l| ((l - max) / temperature).exp()).collect();
    let z: f64 = exp.iter().sum();
    Ok(exp.into_iter().map(|e| e / z).collect())
}

/// The smallest most-probable prefix (ties by lower id) whose mass reaches
/// `top_p`, renormalized. The top token is always kept.
pub fn nucleus_from_probs(probs: &[f64], top_p: f64) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut kept = Vec::new();
    let mut mass = 0.0;
    for id in order {
        if probs[id] <= 0.0 && !kept.is_empty() {
            break;
        }
        kept.push((id, probs[id]));
        mass += probs[id];
        if mass >= top_p {
            break;
        }
    }
    kept.into_iter().map(|(id, p)| (id, p / mass)).collect()
}

pub fn nucleus(logits: &[f64], temperature: f64, top_p: f64) -> Result<Vec<(usize, f64)>, TextgenError> {
    Ok(nucleus_from_probs(&softmax_with_temperature(logits, temperature)?, top_p))
}

/// Draws one token id from the nucleus of `logits`.
pub fn top_p_sample<R: Rng + ?Sized>(logits: &[f64], cfg: &SamplerConfig, rng: &mut R) -> Result<usize, TextgenError> {
    cfg.validate()?;
    let kept = nucleus(logits, cfg.temperature, cfg.top_p)?;
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for &(id, p) in &kept {
        cum += p;
        if u < cum {
            return Ok(id);
        }
    }
    Ok(kept.last().map(|k| k.0).expect("nucleus is never empty"))
}
