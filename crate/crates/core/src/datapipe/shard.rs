use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DatapipeError;
use crate::tokenizer::{TokenId, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub file: String,
    pub tokens: usize,
}

/// Sidecar describing a packed dataset directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardManifest {
    pub vocab_sha256: String,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub split_seed: u64,
    pub train: ShardInfo,
    pub val: ShardInfo,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Hex SHA-256 of the vocabulary file text.
pub fn vocab_hash(vocab: &Vocabulary) -> String {
    Sha256::digest(vocab.to_text().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_ids(path: &Path, ids: &[TokenId]) -> Result<(), DatapipeError> {
    let bytes: Vec<u8> = ids.iter().flat_map(|t| t.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

/// Writes `train.bin`, `val.bin` (u32 little-endian ids) and `manifest.json`.
pub fn write_shards(
    dir: &Path,
    train: &[TokenId],
    val: &[TokenId],
    vocab: &Vocabulary,
    seq_len: usize,
    split_seed: u64,
) -> Result<ShardManifest, DatapipeError> {
    fs::create_dir_all(dir)?;
    write_ids(&dir.join("train.bin"), train)?;
    write_ids(&dir.join("val.bin"), val)?;
    let manifest = ShardManifest {
        vocab_sha256: vocab_hash(vocab),
        vocab_size: vocab.len(),
        seq_len,
        split_seed,
        train: ShardInfo { file: "train.bin".into(), tokens: train.len() },
        val: ShardInfo { file: "val.bin".into(), tokens: val.len() },
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_shard(path: &Path) -> Result<Vec<TokenId>, DatapipeError> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(DatapipeError::Format(format!(
            "{}: length {} is not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

impl ShardManifest {
    pub fn load(dir: &Path) -> Result<Self, DatapipeError> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?)
    }

    /// Reads both shards, checking their lengths and the vocabulary hash.
    pub fn read_streams(&self, dir: &Path, vocab: &Vocabulary) -> Result<(Vec<TokenId>, Vec<TokenId>), DatapipeError> {
        if vocab_hash(vocab) != self.vocab_sha256 {
            return Err(DatapipeError::Format("shards were packed with a different vocabulary".into()));
        }
        let read = |info: &ShardInfo| -> Result<Vec<TokenId>, DatapipeError> {
            let ids = read_shard(&dir.join(&info.file))?;
            if ids.len() != info.tokens {
                return Err(DatapipeError::Format(format!(
                    "{}: {} tokens, manifest says {}",
                    info.file,
                    ids.len(),
                    info.tokens
                )));
            }
            if let Some(&bad) = ids.iter().find(|&&id| id as usize >= vocab.len()) {
                return Err(DatapipeError::Format(format!("{}: token {bad} outside vocabulary", info.file)));
            }
            Ok(ids)
        };
        Ok((read(&self.train)?, read(&self.val)?))
    }
}
