//! Byte-fallback BPE: NFC normalization, whitespace/digit pre-tokenization,
//! training, encoding and the vocabulary file format.

mod bpe;
mod normalize;
mod pretokenize;
mod vocab;

use thiserror::Error;

pub use bpe::{fragment_counts, train_bpe};
pub use normalize::{normalize, normalize_bytes};
pub use pretokenize::{fragments, pretokenize, SPACE_MARKER};
pub use vocab::{TokenId, Vocabulary, BOS, BYTE_TOKENS, EOS, FIRST_MERGE_ID, PAD, SPECIAL_COUNT};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenizerError {
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("token id {id} outside vocabulary of {size}")]
    Index { id: TokenId, size: usize },
    #[error("vocabulary format error: {0}")]
    Format(String),
}
