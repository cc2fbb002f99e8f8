use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sample::top_p_sample;
use super::{SamplerConfig, TextgenError};
use crate::model::{forward, ModelConfig, ModelError, ModelWeights};
use crate::tokenizer::{TokenId, Vocabulary, EOS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    pub text: String,
    pub ids: Vec<TokenId>,
    pub prompt_tokens: usize,
}

/// Samples up to `cfg.max_new_tokens` continuation tokens of `prompt` and
/// returns only the new text. An empty prompt starts from EOS.
pub fn generate(
    weights: &ModelWeights,
    config: &ModelConfig,
    vocab: &Vocabulary,
    prompt: &str,
    cfg: &SamplerConfig,
) -> Result<Generation, TextgenError> {
    generate_streaming(weights, config, vocab, prompt, cfg, |_| {})
}

/// As [`generate`], passing each newly completed piece of UTF-8 text to
/// `on_text` as it is produced.
pub fn generate_streaming(
    weights: &ModelWeights,
    config: &ModelConfig,
    vocab: &Vocabulary,
    prompt: &str,
    cfg: &SamplerConfig,
    mut on_text: impl FnMut(&str),
) -> Result<Generation, TextgenError> {
    cfg.validate()?;
    let mut ids: Vec<usize> = vocab.encode(prompt).into_iter().map(|t| t as usize).collect();
    if ids.is_empty() {
        ids.push(EOS as usize);
    }
    let prompt_tokens = ids.len();
    if prompt_tokens + cfg.max_new_tokens > config.max_context {
        return Err(
            ModelError::ContextOverflow { len: prompt_tokens + cfg.max_new_tokens, max: config.max_context }.into()
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut new_ids: Vec<TokenId> = Vec::new();
    let mut pending: Vec<u8> = Vec::new();
    for _ in 0..cfg.max_new_tokens {
        let logits = forward(weights, config, &ids)?;
        let v = config.vocab_size;
        let last = &logits.data()[(ids.len() - 1) * v..];
        let next = top_p_sample(last, cfg, &mut rng)? as TokenId;
        if cfg.stop_ids.contains(&next) {
            break;
        }
        ids.push(next as usize);
        new_ids.push(next);
        if !Vocabulary::is_special(next) {
            pending.extend_from_slice(vocab.token_bytes(next).unwrap_or_default());
            let valid = match std::str::from_utf8(&pending) {
                Ok(s) => s.len(),
                Err(e) if e.error_len().is_some() => pending.len(),
                Err(e) => e.valid_up_to(),
            };
            if valid > 0 {
                on_text(&String::from_utf8_lossy(&pending[..valid]));
                pending.drain(..valid);
            }
        }
    }
    if !pending.is_empty() {
        on_text(&String::from_utf8_lossy(&pending));
    }
    Ok(Generation { text: vocab.decode(&new_ids)?, ids: new_ids, prompt_tokens })
}
