use rayon::prelude::*;

use super::records::{format_instruction, InstructionRecord, PromptMode};
use super::DatapipeError;
use crate::tokenizer::{TokenId, Vocabulary, EOS, PAD};

/// Target value that contributes no loss.
pub const IGNORE_INDEX: usize = usize::MAX;

/// One training example: `targets[i]` is the token after `inputs[i]`, or
/// [`IGNORE_INDEX`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequence {
    pub inputs: Vec<usize>,
    pub targets: Vec<usize>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Positions that carry a target.
    pub fn target_count(&self) -> usize {
        self.targets.iter().filter(|&&t| t != IGNORE_INDEX).count()
    }

    /// The sequence without trailing positions that have no target. Causal
    /// attention means dropping them leaves every other logit unchanged.
    pub fn trimmed(&self) -> (&[usize], &[usize]) {
        let end = self.targets.iter().rposition(|&t| t != IGNORE_INDEX).map_or(0, |p| p + 1);
        (&self.inputs[..end], &self.targets[..end])
    }
}

/// Each document encoded with EOS appended, concatenated in order.
pub fn token_stream<S: AsRef<str> + Sync>(documents: &[S], vocab: &Vocabulary) -> Vec<TokenId> {
    let encoded: Vec<Vec<TokenId>> = documents
        .par_iter()
        .map(|d| {
            let mut ids = vocab.encode(d.as_ref());
            ids.push(EOS);
            ids
        })
        .collect();
    encoded.concat()
}

/// Cuts `stream` into windows of `seq_len + 1` tokens at stride `seq_len`.
/// A leftover tail becomes one PAD-filled window whose padded targets are
/// ignored.
pub fn windows(stream: &[TokenId], seq_len: usize) -> Result<Vec<Sequence>, DatapipeError> {
    if seq_len < 2 {
        return Err(DatapipeError::SeqLen(seq_len));
    }
    if stream.len() < 2 {
        return Err(DatapipeError::EmptyStream(stream.len()));
    }
    let ids: Vec<usize> = stream.iter().map(|&t| t as usize).collect();
    let full = (ids.len() - 1) / seq_len;
    let mut out: Vec<Sequence> = (0..full)
        .map(|k| {
            let w = &ids[k * seq_len..k * seq_len + seq_len + 1];
            Sequence { inputs: w[..seq_len].to_vec(), targets: w[1..].to_vec() }
        })
        .collect();
    let start = full * seq_len;
    if ids.len() - 1 > start {
        let tail = &ids[start..];
        let mut inputs = tail[..tail.len() - 1].to_vec();
        let mut targets = tail[1..].to_vec();
        inputs.resize(seq_len, PAD as usize);
        targets.resize(seq_len, IGNORE_INDEX);
        out.push(Sequence { inputs, targets });
    }
    Ok(out)
}

/// Tokenizes, concatenates and windows `documents`.
pub fn pack_sequences<S: AsRef<str> + Sync>(
    documents: &[S],
    vocab: &Vocabulary,
    seq_len: usize,
) -> Result<Vec<Sequence>, DatapipeError> {
    if seq_len < 2 {
        return Err(DatapipeError::SeqLen(seq_len));
    }
    windows(&token_stream(documents, vocab), seq_len)
}

/// One sequence per record: the training rendering plus EOS, cut to at most
/// `seq_len` positions. With `mask_prompt`, targets inside the prompt part
/// are ignored.
pub fn instruction_sequences(
    records: &[InstructionRecord],
    vocab: &Vocabulary,
    seq_len: usize,
    mask_prompt: bool,
) -> Result<Vec<Sequence>, DatapipeError> {
    if seq_len < 2 {
        return Err(DatapipeError::SeqLen(seq_len));
    }
    records
        .par_iter()
        .map(|r| {
            r.validate()?;
            let mut ids: Vec<usize> =
                vocab.encode(&format_instruction(r, PromptMode::Train)).into_iter().map(|t| t as usize).collect();
            ids.push(EOS as usize);
            ids.truncate(seq_len + 1);
            let mut targets = ids[1..].to_vec();
            if mask_prompt {
                let prompt_len = vocab.encode(&format_instruction(r, PromptMode::Inference)).len();
                for t in targets.iter_mut().take(prompt_len.saturating_sub(1)) {
                    *t = IGNORE_INDEX;
                }
            }
            ids.pop();
            Ok(Sequence { inputs: ids, targets })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::train_bpe;
    use proptest::prelude::*;

    #[test]
    fn nine_tokens_make_two_windows() {
        let stream: Vec<TokenId> = (10..19).collect();
        let w = windows(&stream, 4).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].inputs, [10, 11, 12, 13]);
        assert_eq!(w[0].targets, [11, 12, 13, 14]);
        assert_eq!(w[1].inputs, [14, 15, 16, 17]);
        assert_eq!(w[1].targets, [15, 16, 17, 18]);
    }

    #[test]
    fn short_document_is_padded() {
        let vocab = Vocabulary::base();
        let w = pack_sequences(&["hi"], &vocab, 8).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(
            w[0].inputs,
            [104, 105, PAD as usize, PAD as usize, PAD as usize, PAD as usize, PAD as usize, PAD as usize]
        );
        assert_eq!(w[0].targets[..2], [105, EOS as usize]);
        assert!(w[0].targets[2..].iter().all(|&t| t == IGNORE_INDEX));
        assert_eq!(w[0].trimmed().0, [104, 105]);
    }

    #[test]
    fn errors() {
        let vocab = Vocabulary::base();
        assert!(matches!(pack_sequences(&["abc"], &vocab, 1), Err(DatapipeError::SeqLen(1))));
        assert!(matches!(pack_sequences::<&str>(&[], &vocab, 4), Err(DatapipeError::EmptyStream(0))));
        assert!(matches!(pack_sequences(&[""], &vocab, 4), Err(DatapipeError::EmptyStream(1))));
    }

    #[test]
    fn documents_are_eos_separated() {
        let vocab = Vocabulary::base();
        assert_eq!(token_stream(&["a", "b"], &vocab), [97, EOS, 98, EOS]);
    }

    #[test]
    fn instruction_masking() {
        let corpus = ["Summarize the case.\n### Input: facts\n### Response: summary"];
        let vocab = train_bpe(&corpus, 300).unwrap();
        let r = InstructionRecord::new("Summarize the case.", Some("facts".into()), "summary").unwrap();
        let full = instruction_sequences(std::slice::from_ref(&r), &vocab, 256, false).unwrap();
        assert_eq!(full[0].target_count(), full[0].len());
        assert_eq!(*full[0].targets.last().unwrap(), EOS as usize);
        let masked = instruction_sequences(std::slice::from_ref(&r), &vocab, 256, true).unwrap();
        assert_eq!(masked[0].inputs, full[0].inputs);
        assert!(masked[0].target_count() < full[0].target_count());
        assert_eq!(*masked[0].targets.last().unwrap(), EOS as usize);
        let cut = instruction_sequences(&[r], &vocab, 4, false).unwrap();
        assert_eq!(cut[0].len(), 4);
    }

    proptest! {
        #[test]
        fn shift_law_and_conservation(stream in proptest::collection::vec(0u32..300, 2..200), seq_len in 2usize..17) {
            let w = windows(&stream, seq_len).unwrap();
            let mut real_inputs = 0;
            for s in &w {
                prop_assert_eq!(s.len(), seq_len);
                for i in 0..seq_len - 1 {
                    if s.targets[i + 1] != IGNORE_INDEX {
                        prop_assert_eq!(s.targets[i], s.inputs[i + 1]);
                    }
                }
                real_inputs += s.target_count();
            }
            // Every token but the first appears exactly once as a target.
            prop_assert_eq!(real_inputs + 1, stream.len());
            let targets: Vec<usize> = w.iter().flat_map(|s| s.targets.iter().copied()).filter(|&t| t != IGNORE_INDEX).collect();
            let expected: Vec<usize> = stream[1..].iter().map(|&t| t as usize).collect();
            prop_assert_eq!(targets, expected);
        }
    }
}
