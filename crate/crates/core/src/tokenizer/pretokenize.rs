/// Display glyph for a whitespace prefix in [`pretokenize`] output.
pub const SPACE_MARKER: char = '\u{2581}';

/// Splits normalized text into the fragments BPE operates on.
///
/// A whitespace character directly followed by a non-whitespace character is
/// attached to the front of that character's fragment; any other whitespace
/// character stands alone. Every numeric character is its own fragment. The
/// returned slices concatenate back to `text`.
pub fn fragments(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let end_of = |i: usize| chars.get(i + 1).map_or(text.len(), |c| c.0);
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = chars[i].0;
        let mut j = i;
        if chars[i].1.is_whitespace() {
            match chars.get(i + 1) {
                Some((_, next)) if !next.is_whitespace() => j = i + 1,
                _ => {
                    out.push(&text[start..end_of(i)]);
                    i += 1;
                    continue;
                }
            }
        }
        let mut k = j;
        if !chars[j].1.is_numeric() {
            while let Some((_, next)) = chars.get(k + 1) {
                if next.is_whitespace() || next.is_numeric() {
                    break;
                }
                k += 1;
            }
        }
        out.push(&text[start..end_of(k)]);
        i = k + 1;
    }
    out
}

/// [`fragments`] with a leading space rendered as [`SPACE_MARKER`].
pub fn pretokenize(text: &str) -> Vec<String> {
    fragments(text)
        .into_iter()
        .map(|f| match f.strip_prefix(' ') {
            Some(rest) => format!("{SPACE_MARKER}{rest}"),
            None => f.to_owned(),
        })
        .collect()
}
