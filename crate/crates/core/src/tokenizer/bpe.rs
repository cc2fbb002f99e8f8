//! Byte-level BPE training.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use rayon::prelude::*;

use super::normalize::normalize;
use super::pretokenize::fragments;
use super::vocab::{apply_merge, TokenId, Vocabulary, FIRST_MERGE_ID};
use super::TokenizerError;

type Pair = (TokenId, TokenId);

/// Heap entry: highest count first, then the lexicographically smallest
/// merged byte string, then the smallest pair.
#[derive(PartialEq, Eq)]
struct Candidate {
    count: u64,
    bytes: Vec<u8>,
    pair: Pair,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count.cmp(&other.count).then_with(|| other.bytes.cmp(&self.bytes)).then_with(|| other.pair.cmp(&self.pair))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Distinct fragments of the normalized corpus with their frequencies,
/// sorted by bytes.
pub fn fragment_counts<S: AsRef<str> + Sync>(corpus: &[S]) -> Vec<(Vec<u8>, u64)> {
    let counts = corpus
        .par_iter()
        .fold(HashMap::<Vec<u8>, u64>::new, |mut acc, doc| {
            let text = normalize(doc.as_ref());
            for frag in fragments(&text) {
                *acc.entry(frag.as_bytes().to_vec()).or_insert(0) += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    let mut counts: Vec<_> = counts.into_iter().collect();
    counts.sort_unstable();
    counts
}

/// Trains a vocabulary of at most `target_vocab` tokens (bytes and specials
/// included) by repeatedly merging the most frequent adjacent pair.
/// Training stops early when no pair occurs at least twice. A merge whose
/// bytes already name a token reuses that id rather than adding a duplicate.
pub fn train_bpe<S: AsRef<str> + Sync>(corpus: &[S], target_vocab: usize) -> Result<Vocabulary, TokenizerError> {
    if target_vocab <= FIRST_MERGE_ID as usize {
        return Err(TokenizerError::Training(format!(
            "target vocabulary {target_vocab} must exceed the {FIRST_MERGE_ID} byte and special tokens"
        )));
    }
    let words = fragment_counts(corpus);
    if words.is_empty() {
        return Err(TokenizerError::Training("corpus has no text".into()));
    }
    let mut trainer = Trainer::new(words);
    let mut vocab = Vocabulary::base();
    while vocab.len() < target_vocab {
        let Some(pair) = trainer.best(&vocab) else { break };
        let merged = vocab.push_merge(pair.0, pair.1);
        trainer.merge(pair, merged, &vocab);
    }
    Ok(vocab)
}

struct Trainer {
    symbols: Vec<Vec<TokenId>>,
    freq: Vec<u64>,
    counts: HashMap<Pair, u64>,
    holders: HashMap<Pair, HashSet<usize>>,
    heap: BinaryHeap<Candidate>,
}

fn merged_bytes(vocab: &Vocabulary, pair: Pair) -> Vec<u8> {
    let mut b = vocab.token_bytes(pair.0).unwrap().to_vec();
    b.extend_from_slice(vocab.token_bytes(pair.1).unwrap());
    b
}

impl Trainer {
    fn new(words: Vec<(Vec<u8>, u64)>) -> Self {
        let mut t = Self {
            symbols: Vec::with_capacity(words.len()),
            freq: Vec::with_capacity(words.len()),
            counts: HashMap::new(),
            holders: HashMap::new(),
            heap: BinaryHeap::new(),
        };
        for (idx, (bytes, f)) in words.into_iter().enumerate() {
            let syms: Vec<TokenId> = bytes.iter().map(|&b| b as TokenId).collect();
            for w in syms.windows(2) {
                *t.counts.entry((w[0], w[1])).or_insert(0) += f;
                t.holders.entry((w[0], w[1])).or_default().insert(idx);
            }
            t.symbols.push(syms);
            t.freq.push(f);
        }
        let base = Vocabulary::base();
        let mut initial: Vec<_> = t.counts.iter().map(|(&p, &c)| (p, c)).collect();
        initial.sort_unstable();
        for (pair, count) in initial {
            t.heap.push(Candidate { count, bytes: merged_bytes(&base, pair), pair });
        }
        t
    }

    /// Pops stale entries until the top reflects a live count.
    fn best(&mut self, vocab: &Vocabulary) -> Option<Pair> {
        while let Some(top) = self.heap.peek() {
            let live = self.counts.get(&top.pair).copied().unwrap_or(0);
            if live != top.count {
                let top = self.heap.pop().unwrap();
                if live > 0 {
                    self.heap.push(Candidate { count: live, bytes: merged_bytes(vocab, top.pair), pair: top.pair });
                }
                continue;
            }
            return (live >= 2).then_some(top.pair);
        }
        None
    }

    fn merge(&mut self, pair: Pair, merged: TokenId, vocab: &Vocabulary) {
        let Some(holders) = self.holders.remove(&pair) else { return };
        let mut holders: Vec<usize> = holders.into_iter().collect();
        holders.sort_unstable();
        let mut touched: HashSet<Pair> = HashSet::new();
        for idx in holders {
            let f = self.freq[idx];
            let old = &self.symbols[idx];
            if !old.windows(2).any(|w| (w[0], w[1]) == pair) {
                continue;
            }
            for w in old.windows(2) {
                let p = (w[0], w[1]);
                if let Some(c) = self.counts.get_mut(&p) {
                    *c -= f;
                    if *c == 0 {
                        self.counts.remove(&p);
                    }
                }
                touched.insert(p);
            }
            let new = apply_merge(old, pair, merged);
            for w in new.windows(2) {
                let p = (w[0], w[1]);
                *self.counts.entry(p).or_insert(0) += f;
                self.holders.entry(p).or_default().insert(idx);
                touched.insert(p);
            }
            self.symbols[idx] = new;
        }
        let mut touched: Vec<Pair> = touched.into_iter().collect();
        touched.sort_unstable();
        for p in touched {
            if let Some(&count) = self.counts.get(&p) {
                self.heap.push(Candidate { count, bytes: merged_bytes(vocab, p), pair: p });
            }
        }
    }

    #[cfg(test)]
    fn segmentation(&self) -> &[Vec<TokenId>] {
        &self.symbols
    }
}

#[cfg(test)]
type Segmentation = Vec<(Vec<u8>, Vec<TokenId>)>;

#[cfg(test)]
pub(crate) fn train_with_segmentation(corpus: &[&str], target_vocab: usize) -> (Vocabulary, Segmentation) {
    let words = fragment_counts(corpus);
    let keys: Vec<Vec<u8>> = words.iter().map(|(w, _)| w.clone()).collect();
    let mut trainer = Trainer::new(words);
    let mut vocab = Vocabulary::base();
    while vocab.len() < target_vocab {
        let Some(pair) = trainer.best(&vocab) else { break };
        let merged = vocab.push_merge(pair.0, pair.1);
        trainer.merge(pair, merged, &vocab);
    }
    let seg = keys.into_iter().zip(trainer.segmentation().iter().cloned()).collect();
    (vocab, seg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::vocab::SPECIAL_COUNT;

    /// Recounts every pair from scratch each round.
    fn brute_force_bpe(corpus: &[&str], target: usize) -> Vocabulary {
        let words = fragment_counts(corpus);
        let mut segs: Vec<(Vec<TokenId>, u64)> =
            words.into_iter().map(|(b, f)| (b.iter().map(|&x| x as TokenId).collect(), f)).collect();
        let mut vocab = Vocabulary::base();
        while vocab.len() < target {
            let mut counts: HashMap<Pair, u64> = HashMap::new();
            for (s, f) in &segs {
                for w in s.windows(2) {
                    *counts.entry((w[0], w[1])).or_insert(0) += f;
                }
            }
            let best = counts.into_iter().filter(|&(_, c)| c >= 2).max_by(|a, b| {
                a.1.cmp(&b.1)
                    .then_with(|| merged_bytes(&vocab, b.0).cmp(&merged_bytes(&vocab, a.0)))
                    .then_with(|| b.0.cmp(&a.0))
            });
            let Some((pair, _)) = best else { break };
            let merged = vocab.push_merge(pair.0, pair.1);
            for (s, _) in &mut segs {
                *s = apply_merge(s, pair, merged);
            }
        }
        vocab
    }

    #[test]
    fn first_merge_is_most_frequent_pair() {
        let target = 256 + SPECIAL_COUNT + 1;
        let v = train_bpe(&["abab abab"], target).unwrap();
        assert_eq!(v.merges()[0], (b'a' as TokenId, b'b' as TokenId));
        assert_eq!(v.len(), target);
    }

    #[test]
    fn single_byte_corpus_learns_nothing() {
        let v = train_bpe(&["a"], 400).unwrap();
        assert_eq!(v.len(), 256 + SPECIAL_COUNT);
        assert!(v.merges().is_empty());
    }

    #[test]
    fn errors() {
        assert!(matches!(train_bpe::<&str>(&[], 300), Err(TokenizerError::Training(_))));
        assert!(train_bpe(&["  "], 300).is_ok());
        assert!(matches!(train_bpe(&[""], 300), Err(TokenizerError::Training(_))));
        assert!(matches!(train_bpe(&["abc"], 259), Err(TokenizerError::Training(_))));
    }

    #[test]
    fn tie_break_prefers_smaller_bytes() {
        // "xy" and "ab" both occur twice; "ab" < "xy".
        let v = train_bpe(&["xyab xyab"], 260).unwrap();
        assert_eq!(v.merges()[0], (b'a' as TokenId, b'b' as TokenId));
    }

    #[test]
    fn incremental_counts_match_brute_force() {
        let corpora: [&[&str]; 3] = [
            &["the tax on the taxed thing", "then the theft"],
            &["aaaa aaa aa a", "abcabcabc bcabca"],
            &["Section 302 of the Indian Penal Code", "the court held the appeal", "appeal allowed"],
        ];
        for corpus in corpora {
            for target in [262, 270, 300] {
                assert_eq!(train_bpe(corpus, target).unwrap(), brute_force_bpe(corpus, target), "{corpus:?} {target}");
            }
        }
    }

    #[test]
    fn encode_reproduces_training_segmentation() {
        let corpus = ["the tax on the taxed thing then the theft", "appeal allowed, appeal dismissed"];
        let (vocab, seg) = train_with_segmentation(&corpus, 300);
        for (bytes, ids) in seg {
            let mut out = Vec::new();
            vocab.encode_fragment(&bytes, &mut out);
            assert_eq!(out, ids, "{:?}", String::from_utf8_lossy(&bytes));
        }
    }

    #[test]
    fn vocab_never_exceeds_target_and_has_no_duplicates() {
        let corpus = ["abcabcabcabc bcbcbc cacaca abcabc"];
        for target in 260..300 {
            let v = train_bpe(&corpus, target).unwrap();
            assert!(v.len() <= target);
            let mut seen = HashSet::new();
            for id in 0..v.len() as TokenId {
                if !Vocabulary::is_special(id) {
                    assert!(seen.insert(v.token_bytes(id).unwrap().to_vec()));
                }
            }
        }
    }
}
