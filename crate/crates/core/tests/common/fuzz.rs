use rand::Rng;

const POOLS: &[&[char]] = &[
    &['a', 'b', 'e', 'h', 'l', 'o', 's', 't', 'A', 'S', 'T'],
    &['0', '1', '2', '3', '4', '5', '6', '7', '8', '9', '०', '३', '٣', '²', '½', 'Ⅻ'],
    &[' ', ' ', '\n', '\t', '\u{3000}'],
    &['.', ',', '(', ')', '§', '-', '\'', '"', '▁'],
    &['😀', '⚖', '👩', '\u{200D}', '💼', '🇮', '🇳'],
    &['\u{0301}', '\u{0308}', '\u{0323}', '\u{093F}', '\u{094D}', 'e', 'o', 'न', 'क'],
    &['é', 'Å', 'ñ', '中', '법', 'ß', 'ﬁ'],
];

/// Random text mixing ASCII, digits of several scripts, whitespace,
/// emoji, combining marks and arbitrary scalar values.
pub fn fuzz_string<R: Rng>(rng: &mut R) -> String {
    let len = rng.gen_range(0..40);
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.08) {
                rng.gen::<char>()
            } else {
                let pool = POOLS[rng.gen_range(0..POOLS.len())];
                pool[rng.gen_range(0..pool.len())]
            }
        })
        .collect()
}

/// Random token sequence of length `0..=max` from a small vocabulary.
pub fn token_seq<R: Rng>(rng: &mut R, max: usize) -> Vec<String> {
    const WORDS: [&str; 6] = ["the", "court", "appeal", "is", "allowed", "a"];
    let len = rng.gen_range(0..=max);
    (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_owned()).collect()
}
