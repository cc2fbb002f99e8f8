use std::collections::HashMap;

/// Lowercases, splits on whitespace and strips leading and trailing
/// non-alphanumeric characters; tokens that become empty are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

/// F1 of `overlap` matches between sequences of the given lengths.
fn f1(overlap: usize, cand: usize, reference: usize) -> f64 {
    if cand == 0 && reference == 0 {
        return 1.0;
    }
    if overlap == 0 {
        return 0.0;
    }
    2.0 * overlap as f64 / (cand + reference) as f64
}

pub fn rouge1_tokens(cand: &[String], reference: &[String]) -> f64 {
    let rc = counts(reference);
    let overlap = counts(cand).iter().map(|(w, &c)| c.min(rc.get(w).copied().unwrap_or(0))).sum();
    f1(overlap, cand.len(), reference.len())
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

pub fn rouge_l_tokens(cand: &[String], reference: &[String]) -> f64 {
    f1(lcs_len(cand, reference), cand.len(), reference.len())
}

/// Clipped unigram-overlap F1.
pub fn rouge1(candidate: &str, reference: &str) -> f64 {
    rouge1_tokens(&tokenize(candidate), &tokenize(reference))
}

/// Longest-common-subsequence F1.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    rouge_l_tokens(&tokenize(candidate), &tokenize(reference))
}

/// Clipped n-gram matches and candidate n-gram count.
fn ngram_matches(cand: &[String], reference: &[String], n: usize) -> (usize, usize) {
    if cand.len() < n {
        return (0, 0);
    }
    let mut rc: HashMap<&[String], usize> = HashMap::new();
    for g in reference.windows(n) {
        *rc.entry(g).or_insert(0) += 1;
    }
    let mut cc: HashMap<&[String], usize> = HashMap::new();
    for g in cand.windows(n) {
        *cc.entry(g).or_insert(0) += 1;
    }
    let matches = cc.iter().map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0))).sum();
    (matches, cand.len() - n + 1)
}

pub fn bleu_tokens(cand: &[String], reference: &[String], max_n: usize) -> f64 {
    if cand.is_empty() || max_n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (m, total) = ngram_matches(cand, reference, n);
        let p = if m > 0 {
            m as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (total as f64 + 1.0)
        };
        log_sum += p.ln();
    }
    let (c, r) = (cand.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * (log_sum / max_n as f64).exp()
}

/// Sentence BLEU: geometric mean of clipped 1..=max_n-gram precisions,
/// add-one smoothed above unigrams when a precision is zero, with the
/// brevity penalty.
pub fn bleu(candidate: &str, reference: &str, max_n: usize) -> f64 {
    bleu_tokens(&tokenize(candidate), &tokenize(reference), max_n)
}

pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_GAMMA: f64 = 0.5;
pub const METEOR_BETA: f64 = 3.0;

/// Exact-match alignment: the k-th occurrence of a word in the candidate
/// pairs with its k-th occurrence in the reference. Returns
/// `(matches, chunks)`, chunks being maximal runs contiguous in both.
pub fn meteor_alignment(cand: &[String], reference: &[String]) -> (usize, usize) {
    let mut positions: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, w) in reference.iter().enumerate() {
        positions.entry(w.as_str()).or_default().push(j);
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut pairs = Vec::new();
    for (i, w) in cand.iter().enumerate() {
        let k = seen.entry(w.as_str()).or_insert(0);
        if let Some(&j) = positions.get(w.as_str()).and_then(|p| p.get(*k)) {
            pairs.push((i, j));
        }
        *k += 1;
    }
    if pairs.is_empty() {
        return (0, 0);
    }
    let breaks = pairs.windows(2).filter(|w| w[1] != (w[0].0 + 1, w[0].1 + 1)).count();
    (pairs.len(), breaks + 1)
}

pub fn meteor_tokens(cand: &[String], reference: &[String]) -> f64 {
    let (m, chunks) = meteor_alignment(cand, reference);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / cand.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f_mean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
    let penalty = METEOR_GAMMA * (chunks as f64 / m as f64).powf(METEOR_BETA);
    f_mean * (1.0 - penalty)
}

/// Recall-weighted harmonic mean of unigram precision and recall, reduced
/// by a fragmentation penalty. Exact matches only.
pub fn meteor(candidate: &str, reference: &str) -> f64 {
    meteor_tokens(&tokenize(candidate), &tokenize(reference))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenization() {
        assert_eq!(tokenize("The Cat, sat!  (on) \"mat\"."), ["the", "cat", "sat", "on", "mat"]);
        assert_eq!(tokenize(" -- ... "), Vec::<String>::new());
        assert_eq!(tokenize("s.302 IPC"), ["s.302", "ipc"]);
    }

    #[test]
    fn rouge_hand_cases() {
        assert_eq!(rouge1("the cat sat", "the cat sat"), 1.0);
        assert_eq!(rouge1("a b", "c d"), 0.0);
        assert_eq!(rouge1("the cat sat on mat", "the cat lay on mat"), 0.8);
        assert_eq!(rouge1("", ""), 1.0);
        assert_eq!(rouge1("a", ""), 0.0);
        assert_eq!(rouge_l("a b c", "a c"), 0.8);
        assert_eq!(lcs_len(&tokenize("a b c"), &tokenize("c b a")), 1);
        assert_eq!(rouge_l("x y", "x y"), 1.0);
    }

    #[test]
    fn bleu_hand_cases() {
        assert_eq!(bleu("the court allowed the appeal", "the court allowed the appeal", 4), 1.0);
        assert_eq!(bleu("a b c d", "e f g h", 4), 0.0);
        assert_eq!(bleu("", "a b", 4), 0.0);
        // p1 = 2/3 (second "a" clipped), p2 = 1/2, p3 = 1/(1+1), p4 = 1/(0+1).
        let expected = (((2.0f64 / 3.0).ln() + 0.5f64.ln() * 2.0) / 4.0).exp();
        assert!((bleu("a b a", "a b c", 4) - expected).abs() < 1e-12);
        let short = bleu("a b", "a b c d", 4);
        assert!((short - (1.0 - 2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn meteor_hand_cases() {
        assert_eq!(meteor("a b", "c d"), 0.0);
        assert_eq!(meteor_alignment(&tokenize("a b"), &tokenize("a b")), (2, 1));
        assert_eq!(meteor("a b", "a b"), 0.9375);
        assert_eq!(meteor_alignment(&tokenize("a b c"), &tokenize("c b a")), (3, 3));
        assert_eq!(meteor_alignment(&tokenize("a a b"), &tokenize("b a a")), (3, 2));
    }
}
