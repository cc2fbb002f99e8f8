//! Autoregressive decoding with temperature and nucleus sampling, the
//! zero-shot legal prompts, and judgement-label extraction.

mod generate;
mod judgement;
mod prompts;
mod sample;

use thiserror::Error;

use crate::model::ModelError;
use crate::tokenizer::TokenizerError;

pub use generate::{generate, generate_streaming, Generation};
pub use judgement::{parse_judgement, Judgement, JudgementParser, Label, DEFAULT_LABEL_WORDS};
pub use prompts::{judgement_prompt, summarization_prompt};
pub use sample::{nucleus, nucleus_from_probs, softmax_with_temperature, top_p_sample, SamplerConfig};

#[derive(Debug, Error)]
pub enum TextgenError {
    #[error("invalid sampler config: {0}")]
    Config(String),
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("no judgement label in response")]
    Unparseable,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}
