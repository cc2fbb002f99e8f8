use regex::Regex;

use super::DatapipeError;

/// Lines that make up the meta-header of a scraped judgment: case numbers,
/// bench and party listings, citation and date lines.
pub const DEFAULT_HEADER_PATTERNS: &[&str] = &[
    r"(?i)^\s*(case|civil appeal|criminal appeal|writ petition|special leave petition|transfer petition|slp)\b.*(no\.?|number)\s*[\w./-]*.*$",
    r"(?i)^\s*(judges?|bench|coram|petitioner|respondent|appellant|date of judgment|citation|citator info|headnote|act|author)s?\s*[:.-].*$",
    r"(?i)^\s*(in the supreme court of india|supreme court of india|reportable|non-reportable|versus|vs\.?|v\.)\s*$",
    r"(?i)^\s*\d{1,2}[./-]\d{1,2}[./-]\d{2,4}\s*$",
];

#[derive(Debug, Clone)]
pub struct CleanConfig {
    pub header_patterns: Vec<Regex>,
}

impl CleanConfig {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self, DatapipeError> {
        let header_patterns = patterns.iter().map(|p| Regex::new(p.as_ref())).collect::<Result<_, _>>()?;
        Ok(Self { header_patterns })
    }

    fn is_header_line(&self, line: &str) -> bool {
        line.trim().is_empty() || self.header_patterns.iter().any(|re| re.is_match(line))
    }
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self::new(DEFAULT_HEADER_PATTERNS).expect("default patterns compile")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanOutcome {
    pub text: String,
    /// Nothing readable survived.
    pub empty: bool,
    pub header_blocks_removed: usize,
}

pub fn clean_case_text(raw: &str) -> CleanOutcome {
    clean_with(raw, &CleanConfig::default())
}

/// Strips control and replacement characters, drops leading header blocks
/// and collapses whitespace. A header block is a blank-line-terminated run
/// of lines that all match a header pattern; the last block of a document is
/// never dropped, so closing decisions survive.
pub fn clean_with(raw: &str, config: &CleanConfig) -> CleanOutcome {
    let readable: String = raw
        .replace("\r\n", "\n")
        .chars()
        .filter_map(|c| match c {
            '\n' | '\r' => Some('\n'),
            '\u{FFFD}' | '\u{FEFF}' => None,
            c if c.is_whitespace() => Some(' '),
            c if c.is_control() => None,
            c => Some(c),
        })
        .collect();

    let mut lines: Vec<&str> = readable.split('\n').collect();
    let mut removed = 0;
    loop {
        let start = lines.iter().position(|l| !l.trim().is_empty()).unwrap_or(lines.len());
        let Some(len) = lines[start..].iter().position(|l| l.trim().is_empty()) else {
            break;
        };
        let block = &lines[start..start + len];
        let more_text = lines[start + len..].iter().any(|l| !l.trim().is_empty());
        if !more_text || !block.iter().all(|l| config.is_header_line(l)) {
            break;
        }
        lines.drain(..start + len);
        removed += 1;
    }

    let mut text = String::with_capacity(readable.len());
    let mut pending: Option<char> = None;
    for c in lines.join("\n").chars() {
        if c.is_whitespace() {
            pending = Some(if c == '\n' || pending == Some('\n') { '\n' } else { ' ' });
            continue;
        }
        if let Some(ws) = pending.take() {
            if !text.is_empty() {
                text.push(ws);
            }
        }
        text.push(c);
    }
    CleanOutcome { empty: text.is_empty(), text, header_blocks_removed: removed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn collapses_spaces() {
        assert_eq!(clean_case_text("a   b").text, "a b");
        assert_eq!(clean_case_text("a \t\n\n  b\r\nc").text, "a\nb\nc");
        assert_eq!(clean_case_text("  lead and trail \n").text, "lead and trail");
    }

    #[test]
    fn strips_control_and_replacement() {
        let out = clean_case_text("ab\u{0000}c\u{FFFD}d\u{0007}");
        assert_eq!(out.text, "abcd");
    }

    #[test]
    fn drops_matched_header_block() {
        let out = clean_case_text("CASE NO. 12\nJUDGE: X\n\nbody of the judgment");
        assert_eq!(out.text, "body of the judgment");
        assert_eq!(out.header_blocks_removed, 1);
    }

    #[test]
    fn keeps_unmatched_first_block_and_trailing_decision() {
        let doc = "The appellant was convicted.\n\nAppeal dismissed.";
        assert_eq!(clean_case_text(doc).text, "The appellant was convicted.\nAppeal dismissed.");
        let only_header = "JUDGE: X";
        assert_eq!(clean_case_text(only_header).text, "JUDGE: X");
    }

    #[test]
    fn custom_patterns() {
        let cfg = CleanConfig::new(&["^HDR"]).unwrap();
        assert_eq!(clean_with("HDR one\nHDR two\n\nHDR three\n\nbody", &cfg).text, "body");
        assert!(CleanConfig::new(&["("]).is_err());
    }

    #[test]
    fn empty_is_flagged() {
        let out = clean_case_text(" \u{0000}\n\u{FFFD} ");
        assert!(out.empty);
        assert_eq!(out.text, "");
    }

    proptest! {
        #[test]
        fn idempotent(raw in "[a-zA-Z0-9 :.\\n\\t\\r\u{0}\u{FFFD}é]{0,80}") {
            let once = clean_case_text(&raw).text;
            let twice = clean_case_text(&once).text;
            prop_assert_eq!(&once, &twice);
            prop_assert!(!once.chars().any(|c| c.is_control() && c != '\n'));
        }

        #[test]
        fn idempotent_with_headers(body in "[a-z ]{1,20}", n in 0usize..3) {
            let raw = format!("{}\n\n{body}", "CASE NO. 7\nJUDGE: Y\n\n".repeat(n));
            let once = clean_case_text(&raw).text;
            prop_assert_eq!(clean_case_text(&once).text, once);
        }
    }
}
