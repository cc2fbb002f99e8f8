use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use super::TextgenError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Rejected = 0,
    Accepted = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgement {
    pub label: Label,
    pub explanation: String,
}

/// Words read as a verdict, matched case-insensitively as whole words.
pub const DEFAULT_LABEL_WORDS: &[(&str, Label)] = &[
    ("1", Label::Accepted),
    ("0", Label::Rejected),
    ("accepted", Label::Accepted),
    ("allowed", Label::Accepted),
    ("rejected", Label::Rejected),
    ("dismissed", Label::Rejected),
];

/// Finds the first verdict word in a response.
#[derive(Debug, Clone)]
pub struct JudgementParser {
    words: Vec<(String, Label)>,
    pattern: Regex,
}

impl JudgementParser {
    pub fn new<S: AsRef<str>>(words: &[(S, Label)]) -> Result<Self, TextgenError> {
        if words.is_empty() {
            return Err(TextgenError::Config("label table is empty".into()));
        }
        let alternatives: Vec<String> = words.iter().map(|(w, _)| regex::escape(w.as_ref())).collect();
        let pattern = RegexBuilder::new(&format!(r"\b({})\b", alternatives.join("|")))
            .case_insensitive(true)
            .build()
            .map_err(|e| TextgenError::Config(e.to_string()))?;
        Ok(Self { words: words.iter().map(|(w, l)| (w.as_ref().to_lowercase(), *l)).collect(), pattern })
    }

    pub fn parse(&self, response: &str) -> Result<Judgement, TextgenError> {
        let m = self.pattern.find(response).ok_or(TextgenError::Unparseable)?;
        let word = m.as_str().to_lowercase();
        let label = self.words.iter().find(|(w, _)| *w == word).map(|(_, l)| *l).ok_or(TextgenError::Unparseable)?;
        let sep = |c: char| c.is_whitespace() || matches!(c, ':' | '-' | '.' | ',' | ')' | ']');
        let after = response[m.end()..].trim_start_matches(sep).trim_end();
        let explanation = if after.is_empty() { response[..m.start()].trim() } else { after };
        Ok(Judgement { label, explanation: explanation.to_owned() })
    }
}

impl Default for JudgementParser {
    fn default() -> Self {
        Self::new(DEFAULT_LABEL_WORDS).expect("default label table")
    }
}

pub fn parse_judgement(response: &str) -> Result<Judgement, TextgenError> {
    JudgementParser::default().parse(response)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leading_digit() {
        let j = parse_judgement("1\nThe appeal succeeds because the evidence was excluded.").unwrap();
        assert_eq!(j.label, Label::Accepted);
        assert_eq!(j.explanation, "The appeal succeeds because the evidence was excluded.");
    }

    #[test]
    fn synonym_words() {
        assert_eq!(
            parse_judgement("The petition is rejected since it is time-barred.").unwrap().label,
            Label::Rejected
        );
        assert_eq!(parse_judgement("Appeal ALLOWED.").unwrap().label, Label::Accepted);
        assert_eq!(parse_judgement("dismissed: no merit").unwrap().explanation, "no merit");
        assert_eq!(parse_judgement("The appeal stands dismissed").unwrap().explanation, "The appeal stands");
    }

    #[test]
    fn first_label_wins() {
        assert_eq!(
            parse_judgement("0. Although counsel argued it should be allowed...").unwrap().label,
            Label::Rejected
        );
    }

    #[test]
    fn missing_label() {
        assert!(matches!(parse_judgement("The court considered the evidence."), Err(TextgenError::Unparseable)));
        assert!(matches!(parse_judgement("Section 10 and 302"), Err(TextgenError::Unparseable)));
        assert!(matches!(parse_judgement("disallowed"), Err(TextgenError::Unparseable)));
    }

    #[test]
    fn custom_table() {
        let p = JudgementParser::new(&[("upheld", Label::Accepted), ("quashed", Label::Rejected)]).unwrap();
        assert_eq!(p.parse("Conviction Upheld").unwrap().label, Label::Accepted);
        assert!(p.parse("appeal allowed").is_err());
        assert!(JudgementParser::new::<&str>(&[]).is_err());
    }
}
