//! Corpus cleaning, instruction records, splits and fixed-length packing.

mod clean;
mod pack;
mod records;
mod shard;
mod split;

use thiserror::Error;

pub use clean::{clean_case_text, clean_with, CleanConfig, CleanOutcome, DEFAULT_HEADER_PATTERNS};
pub use pack::{instruction_sequences, pack_sequences, token_stream, windows, Sequence, IGNORE_INDEX};
pub use records::{
    corpus_stats, dedup_instructions, format_instruction, read_instructions_jsonl, CorpusStats, Document,
    InstructionRecord, PromptMode, Source,
};
pub use shard::{read_shard, vocab_hash, write_shards, ShardInfo, ShardManifest, MANIFEST_FILE};
pub use split::split;

#[derive(Debug, Error)]
pub enum DatapipeError {
    #[error("invalid split: {0}")]
    Split(String),
    #[error("token stream of {0} tokens is too short to pack")]
    EmptyStream(usize),
    #[error("sequence length must be at least 2, got {0}")]
    SeqLen(usize),
    #[error("invalid record: {0}")]
    Record(String),
    #[error("invalid header pattern: {0}")]
    Pattern(#[from] regex::Error),
    #[error("shard format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
