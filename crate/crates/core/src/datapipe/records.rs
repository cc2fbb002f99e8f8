use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::DatapipeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Case,
    Constitution,
    PenalCode,
    Instruction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub source: Source,
    pub word_count: usize,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, source: Source) -> Self {
        let text = text.into();
        let word_count = text.split_whitespace().count();
        Self { id: id.into(), text, source, word_count }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub instruction: String,
    #[serde(default)]
    pub input: Option<String>,
    pub output: String,
}

impl InstructionRecord {
    pub fn new(
        instruction: impl Into<String>,
        input: Option<String>,
        output: impl Into<String>,
    ) -> Result<Self, DatapipeError> {
        let r = Self { instruction: instruction.into(), input, output: output.into() };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), DatapipeError> {
        if self.instruction.trim().is_empty() || self.output.trim().is_empty() {
            return Err(DatapipeError::Record("instruction and output must be non-empty".into()));
        }
        Ok(())
    }

    /// The input text, if it has any non-whitespace content.
    pub fn input_text(&self) -> Option<&str> {
        self.input.as_deref().filter(|s| !s.trim().is_empty())
    }
}

/// Reads one JSON object per non-blank line; unknown keys are ignored.
pub fn read_instructions_jsonl(reader: impl BufRead) -> Result<Vec<InstructionRecord>, DatapipeError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InstructionRecord =
            serde_json::from_str(&line).map_err(|e| DatapipeError::Record(format!("line {}: {e}", n + 1)))?;
        rec.validate().map_err(|e| DatapipeError::Record(format!("line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Keeps the first of records whose whitespace-normalized
/// (instruction, input, output) agree. Returns the survivors and the number
/// removed.
pub fn dedup_instructions(records: &[InstructionRecord]) -> (Vec<InstructionRecord>, usize) {
    let mut seen = HashSet::new();
    let kept: Vec<InstructionRecord> = records
        .iter()
        .filter(|r| seen.insert((squash(&r.instruction), squash(r.input.as_deref().unwrap_or("")), squash(&r.output))))
        .cloned()
        .collect();
    let removed = records.len() - kept.len();
    (kept, removed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptMode {
    Train,
    Inference,
}

/// `<instruction>\n### Input: <input>\n### Response: <output>`; inference
/// mode stops after `"### Response: "`.
pub fn format_instruction(record: &InstructionRecord, mode: PromptMode) -> String {
    let mut s = record.instruction.clone();
    if let Some(input) = record.input_text() {
        s.push_str("\n### Input: ");
        s.push_str(input);
    }
    s.push_str("\n### Response: ");
    if mode == PromptMode::Train {
        s.push_str(&record.output);
    }
    s
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub per_source: BTreeMap<Source, u64>,
    pub documents: usize,
    pub total_words: u64,
}

pub fn corpus_stats(documents: &[Document]) -> CorpusStats {
    let mut stats = CorpusStats { documents: documents.len(), ..Default::default() };
    for d in documents {
        let words = d.text.split_whitespace().count() as u64;
        *stats.per_source.entry(d.source).or_insert(0) += words;
        stats.total_words += words;
    }
    stats
}
