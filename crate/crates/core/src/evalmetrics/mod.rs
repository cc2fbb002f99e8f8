//! Lexical summary metrics, judgement classification scores and
//! judge-model request formatting.

mod classify;
mod judge;
mod lexical;

use std::collections::BTreeMap;
use std::io::BufRead;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textgen::{JudgementParser, Label};

pub use classify::{classification_scores, ClassificationScores};
pub use judge::{judge_parse, judge_request, judge_with, JudgeEndpoint, JudgeScores, JudgeTransport, JUDGE_RUBRIC};
pub use lexical::{
    bleu, bleu_tokens, lcs_len, meteor, meteor_alignment, meteor_tokens, rouge1, rouge1_tokens, rouge_l,
    rouge_l_tokens, tokenize, METEOR_ALPHA, METEOR_BETA, METEOR_GAMMA,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {truths} truths")]
    Length { predictions: usize, truths: usize },
    #[error("label {0} is not 0 or 1")]
    Label(u8),
    #[error("judge score {field} = {value} outside [0, 10]")]
    JudgeRange { field: &'static str, value: f64 },
    #[error("malformed judge reply: {0}")]
    JudgeReply(String),
    #[error("judge transport: {0}")]
    JudgeTransport(String),
    #[error("bad evaluation record: {0}")]
    Record(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub value: f64,
    pub support: usize,
}

/// `{id, candidate, reference}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRecord {
    #[serde(default)]
    pub id: String,
    pub candidate: String,
    pub reference: String,
}

/// `{id, prediction_text, truth_label}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgementRecord {
    #[serde(default)]
    pub id: String,
    pub prediction_text: String,
    pub truth_label: u8,
}

pub type Report = BTreeMap<String, MetricScore>;

/// Mean ROUGE-1, ROUGE-L, BLEU and METEOR over the pairs.
pub fn score_summaries(records: &[SummaryRecord]) -> Report {
    let rows: Vec<[f64; 4]> = records
        .par_iter()
        .map(|r| {
            let (c, t) = (tokenize(&r.candidate), tokenize(&r.reference));
            [rouge1_tokens(&c, &t), rouge_l_tokens(&c, &t), bleu_tokens(&c, &t, 4), meteor_tokens(&c, &t)]
        })
        .collect();
    let n = rows.len();
    ["rouge1", "rougeL", "bleu", "meteor"]
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let value = if n == 0 { 0.0 } else { rows.iter().map(|r| r[k]).sum::<f64>() / n as f64 };
            (name.to_string(), MetricScore { value, support: n })
        })
        .collect()
}

/// Accuracy, macro-F1 and the number of unparseable responses.
pub fn score_judgements(records: &[JudgementRecord], parser: &JudgementParser) -> Result<Report, EvalError> {
    let predictions: Vec<Option<u8>> = records
        .iter()
        .map(|r| parser.parse(&r.prediction_text).ok().map(|j| (j.label == Label::Accepted) as u8))
        .collect();
    let truths: Vec<u8> = records.iter().map(|r| r.truth_label).collect();
    let s = classification_scores(&predictions, &truths)?;
    let unparseable = predictions.iter().filter(|p| p.is_none()).count();
    Ok(BTreeMap::from([
        ("accuracy".to_string(), MetricScore { value: s.accuracy, support: s.support }),
        ("macro_f1".to_string(), MetricScore { value: s.macro_f1, support: s.support }),
        ("unparseable".to_string(), MetricScore { value: unparseable as f64, support: s.support }),
    ]))
}

pub fn read_jsonl<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, EvalError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Record(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_report() {
        let recs = vec![
            SummaryRecord { id: "a".into(), candidate: "the cat sat".into(), reference: "the cat sat".into() },
            SummaryRecord { id: "b".into(), candidate: "x".into(), reference: "y".into() },
        ];
        let r = score_summaries(&recs);
        assert_eq!(r["rouge1"], MetricScore { value: 0.5, support: 2 });
        assert_eq!(r.len(), 4);
        assert_eq!(score_summaries(&[])["bleu"].value, 0.0);
    }

    #[test]
    fn judgement_report() {
        let text = "{\"id\":\"1\",\"prediction_text\":\"1 because\",\"truth_label\":1}\n{\"id\":\"2\",\"prediction_text\":\"unclear\",\"truth_label\":0}\n";
        let recs: Vec<JudgementRecord> = read_jsonl(text.as_bytes()).unwrap();
        let r = score_judgements(&recs, &JudgementParser::default()).unwrap();
        assert_eq!(r["accuracy"].value, 0.5);
        assert_eq!(r["unparseable"].value, 1.0);
        assert!(read_jsonl::<JudgementRecord>("{".as_bytes()).is_err());
    }
}
