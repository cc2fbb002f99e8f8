use unicode_normalization::{is_nfc, UnicodeNormalization};

use super::TokenizerError;

/// Unicode NFC form of `text`.
pub fn normalize(text: &str) -> String {
    if is_nfc(text) {
        text.to_owned()
    } else {
        text.nfc().collect()
    }
}

/// [`normalize`] for raw bytes, rejecting invalid UTF-8.
pub fn normalize_bytes(raw: &[u8]) -> Result<String, TokenizerError> {
    let text = std::str::from_utf8(raw).map_err(|e| TokenizerError::Encoding(e.to_string()))?;
    Ok(normalize(text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composes_combining_accent() {
        let out = normalize("e\u{0301}");
        assert_eq!(out, "\u{e9}");
        assert_eq!(out.chars().count(), 1);
    }

    #[test]
    fn ascii_is_fixed_point() {
        assert_eq!(normalize("Section 302 IPC"), "Section 302 IPC");
    }

    #[test]
    fn idempotent() {
        let s = "Cafe\u{0301} A\u{030A}ngstro\u{0308}m \u{1E9B}\u{0323}";
        assert_eq!(normalize(&normalize(s)), normalize(s));
    }

    #[test]
    fn invalid_utf8_is_an_error() {
        assert!(matches!(normalize_bytes(&[0x61, 0xff]), Err(TokenizerError::Encoding(_))));
    }
}
