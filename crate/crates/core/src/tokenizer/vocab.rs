use std::collections::HashMap;
use std::fmt::Write as _;

use super::normalize::normalize;
use super::pretokenize::fragments;
use super::TokenizerError;

pub type TokenId = u32;

/// Number of single-byte tokens at the front of every vocabulary.
pub const BYTE_TOKENS: usize = 256;
pub const BOS: TokenId = 256;
pub const EOS: TokenId = 257;
pub const PAD: TokenId = 258;
pub const SPECIAL_COUNT: usize = 3;
/// First id available to learned merges.
pub const FIRST_MERGE_ID: TokenId = (BYTE_TOKENS + SPECIAL_COUNT) as TokenId;

const SPECIAL_NAMES: [&str; SPECIAL_COUNT] = ["<|bos|>", "<|eos|>", "<|pad|>"];
const HEADER_PREFIX: &str = "AYN-BPE v1 vocab=";
const MERGES_MARKER: &str = "#MERGES";

/// Ordered token table with ranked merges.
///
/// Ids `0..256` are the single bytes, `256..259` are BOS/EOS/PAD, and every
/// later id is a learned token whose bytes are the concatenation of the two
/// tokens of a merge. No two non-special tokens share a byte string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<Vec<u8>>,
    merges: Vec<(TokenId, TokenId)>,
    /// pair → (rank, merged id)
    ranks: HashMap<(TokenId, TokenId), (u32, TokenId)>,
    lookup: HashMap<Vec<u8>, TokenId>,
}

impl Vocabulary {
    /// Bytes and specials only.
    pub fn base() -> Self {
        let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        tokens.extend(SPECIAL_NAMES.iter().map(|s| s.as_bytes().to_vec()));
        let lookup = (0..=255u8).map(|b| (vec![b], b as TokenId)).collect();
        Self { tokens, merges: Vec::new(), ranks: HashMap::new(), lookup }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn merges(&self) -> &[(TokenId, TokenId)] {
        &self.merges
    }

    pub fn token_bytes(&self, id: TokenId) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    pub fn id_of(&self, bytes: &[u8]) -> Option<TokenId> {
        self.lookup.get(bytes).copied()
    }

    pub fn is_special(id: TokenId) -> bool {
        (BOS..FIRST_MERGE_ID).contains(&id)
    }

    /// Appends a merge, allocating a token for its bytes unless one exists.
    /// Returns the merged id.
    pub(crate) fn push_merge(&mut self, left: TokenId, right: TokenId) -> TokenId {
        let mut bytes = self.tokens[left as usize].clone();
        bytes.extend_from_slice(&self.tokens[right as usize]);
        let id = match self.lookup.get(&bytes) {
            Some(&id) => id,
            None => {
                let id = self.tokens.len() as TokenId;
                self.tokens.push(bytes.clone());
                self.lookup.insert(bytes, id);
                id
            }
        };
        let rank = self.merges.len() as u32;
        self.merges.push((left, right));
        self.ranks.entry((left, right)).or_insert((rank, id));
        id
    }

    /// Applies the merges to one fragment, lowest rank first.
    pub fn encode_fragment(&self, bytes: &[u8], out: &mut Vec<TokenId>) {
        let mut symbols: Vec<TokenId> = bytes.iter().map(|&b| b as TokenId).collect();
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).map(|&(rank, id)| (rank, (w[0], w[1]), id)))
                .min_by_key(|&(rank, _, _)| rank);
            let Some((_, pair, merged)) = best else { break };
            symbols = apply_merge(&symbols, pair, merged);
        }
        out.extend(symbols);
    }

    /// NFC-normalizes, splits into fragments and applies merges. Characters
    /// never seen in training fall back to their UTF-8 byte tokens.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let text = normalize(text);
        let mut out = Vec::with_capacity(text.len() / 2);
        let mut cache: HashMap<&str, Vec<TokenId>> = HashMap::new();
        for frag in fragments(&text) {
            let ids = cache.entry(frag).or_insert_with(|| {
                let mut ids = Vec::new();
                self.encode_fragment(frag.as_bytes(), &mut ids);
                ids
            });
            out.extend_from_slice(ids);
        }
        out
    }

    /// Concatenates token bytes and reads them as UTF-8 (lossily, since a
    /// sampled sequence may split a character). Special tokens contribute
    /// nothing.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String, TokenizerError> {
        let mut bytes = Vec::new();
        for &id in ids {
            if id as usize >= self.tokens.len() {
                return Err(TokenizerError::Index { id, size: self.tokens.len() });
            }
            if Self::is_special(id) {
                continue;
            }
            bytes.extend_from_slice(&self.tokens[id as usize]);
        }
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    /// Text form: header line, one hex-encoded token per line, `#MERGES`,
    /// then one `left right` pair per line in rank order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{HEADER_PREFIX}{}", self.tokens.len());
        for tok in &self.tokens {
            for b in tok {
                let _ = write!(s, "{b:02x}");
            }
            s.push('\n');
        }
        s.push_str(MERGES_MARKER);
        s.push('\n');
        for (l, r) in &self.merges {
            let _ = writeln!(s, "{l} {r}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, TokenizerError> {
        let bad = |line: usize, msg: &str| TokenizerError::Format(format!("line {line}: {msg}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
        let size: usize = header
            .strip_prefix(HEADER_PREFIX)
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| bad(1, "bad header"))?;
        if size < FIRST_MERGE_ID as usize {
            return Err(bad(1, "vocabulary smaller than bytes plus specials"));
        }
        let mut tokens = Vec::with_capacity(size);
        for _ in 0..size {
            let (n, line) = lines.next().ok_or_else(|| bad(0, "truncated token table"))?;
            tokens.push(decode_hex(line.trim()).ok_or_else(|| bad(n, "bad hex token"))?);
        }
        let base = Self::base();
        if tokens[..FIRST_MERGE_ID as usize] != base.tokens[..] {
            return Err(bad(2, "byte or special tokens out of place"));
        }
        match lines.next() {
            Some((_, l)) if l.trim() == MERGES_MARKER => {}
            Some((n, _)) => return Err(bad(n, "expected #MERGES")),
            None => return Err(bad(0, "missing #MERGES")),
        }
        let mut vocab = base;
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace().map(str::parse::<TokenId>);
            let (Some(Ok(l)), Some(Ok(r)), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad(n, "bad merge line"));
            };
            let known = vocab.tokens.len() as TokenId;
            if l >= known || r >= known || Self::is_special(l) || Self::is_special(r) {
                return Err(bad(n, "merge refers to an unknown token"));
            }
            let id = vocab.push_merge(l, r);
            if vocab.tokens.len() > size || tokens[id as usize] != vocab.tokens[id as usize] {
                return Err(bad(n, "merge result disagrees with the token table"));
            }
        }
        if vocab.tokens.len() != size {
            return Err(bad(0, "token table lists tokens no merge produces"));
        }
        Ok(vocab)
    }
}

pub(crate) fn apply_merge(symbols: &[TokenId], pair: (TokenId, TokenId), merged: TokenId) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && (symbols[i], symbols[i + 1]) == pair {
            out.push(merged);
            i += 2;
        } else {
            out.push(symbols[i]);
            i += 1;
        }
    }
    out
}

fn decode_hex(s: &str) -> Option<Vec<u8>> {
    if s.is_empty() || !s.len().is_multiple_of(2) {
        return None;
    }
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_vocabulary_layout() {
        let v = Vocabulary::base();
        assert_eq!(v.len(), 259);
        for b in 0..=255u8 {
            assert_eq!(v.token_bytes(b as TokenId), Some(&[b][..]));
        }
        assert!(Vocabulary::is_special(EOS));
        assert!(!Vocabulary::is_special(255));
    }

    #[test]
    fn unknown_text_falls_back_to_bytes() {
        let v = Vocabulary::base();
        let ids = v.encode("\u{1F600}");
        assert_eq!(ids, "\u{1F600}".bytes().map(TokenId::from).collect::<Vec<_>>());
        assert_eq!(v.decode(&ids).unwrap(), "\u{1F600}");
    }

    #[test]
    fn merge_applies_to_both_pairs() {
        let mut v = Vocabulary::base();
        let ab = v.push_merge(b'a' as TokenId, b'b' as TokenId);
        assert_eq!(v.encode("abab"), [ab, ab]);
        assert_eq!(v.encode(""), Vec::<TokenId>::new());
    }

    #[test]
    fn duplicate_merge_reuses_token() {
        let mut v = Vocabulary::base();
        let ab = v.push_merge(b'a' as TokenId, b'b' as TokenId);
        let bc = v.push_merge(b'b' as TokenId, b'c' as TokenId);
        let abc1 = v.push_merge(ab, b'c' as TokenId);
        let abc2 = v.push_merge(b'a' as TokenId, bc);
        assert_eq!(abc1, abc2);
        assert_eq!(v.len(), 262);
    }

    #[test]
    fn decode_rejects_out_of_range() {
        let v = Vocabulary::base();
        assert!(matches!(v.decode(&[259]), Err(TokenizerError::Index { id: 259, .. })));
        assert_eq!(v.decode(&[]).unwrap(), "");
    }

    #[test]
    fn text_format_round_trip_and_validation() {
        let mut v = Vocabulary::base();
        let th = v.push_merge(b't' as TokenId, b'h' as TokenId);
        v.push_merge(th, b'e' as TokenId);
        let text = v.to_text();
        assert!(text.starts_with("AYN-BPE v1 vocab=261\n"));
        assert_eq!(Vocabulary::from_text(&text).unwrap(), v);

        let broken = text.replacen("AYN-BPE", "XYZ-BPE", 1);
        assert!(matches!(Vocabulary::from_text(&broken), Err(TokenizerError::Format(_))));
        let truncated: String = text.lines().take(100).collect::<Vec<_>>().join("\n");
        assert!(Vocabulary::from_text(&truncated).is_err());
    }
}
