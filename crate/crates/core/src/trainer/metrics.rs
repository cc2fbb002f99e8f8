use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrainerError;

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub loss: f64,
    pub perplexity: f64,
    pub lr: f64,
    pub grad_norm: f64,
    pub tokens: usize,
    pub tokens_per_sec: f64,
    pub mfu: f64,
    #[serde(default)]
    pub elapsed_sec: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_perplexity: Option<f64>,
}

/// Receives training progress.
pub trait MetricsSink {
    fn on_step(&mut self, record: &StepRecord) -> Result<(), TrainerError>;

    fn on_checkpoint(&mut self, _step: u64, _path: &Path) -> Result<(), TrainerError> {
        Ok(())
    }
}

/// Keeps records in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub records: Vec<StepRecord>,
    pub checkpoints: Vec<(u64, PathBuf)>,
}

impl MetricsSink for MemorySink {
    fn on_step(&mut self, record: &StepRecord) -> Result<(), TrainerError> {
        self.records.push(record.clone());
        Ok(())
    }

    fn on_checkpoint(&mut self, step: u64, path: &Path) -> Result<(), TrainerError> {
        self.checkpoints.push((step, path.to_owned()));
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl MetricsSink for NullSink {
    fn on_step(&mut self, _record: &StepRecord) -> Result<(), TrainerError> {
        Ok(())
    }
}

/// Appends one JSON object per step to a file.
pub struct JsonlSink {
    out: BufWriter<File>,
}

impl JsonlSink {
    pub fn create(path: &Path) -> Result<Self, TrainerError> {
        Ok(Self { out: BufWriter::new(File::create(path)?) })
    }
}

impl MetricsSink for JsonlSink {
    fn on_step(&mut self, record: &StepRecord) -> Result<(), TrainerError> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<StepRecord>, TrainerError> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
