use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::AdamState;
use super::plan::TrainPlan;
use super::{TrainState, TrainerError};
use crate::model::{ModelConfig, ModelWeights};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"AYN1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset from the start of the payload section.
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    plan: TrainPlan,
    step: u64,
    seed: u64,
    loss_window: Vec<f64>,
    tensors: Vec<TensorEntry>,
}

/// Weights, optimizer moments, configuration and progress of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub plan: TrainPlan,
    pub weights: ModelWeights,
    pub state: TrainState,
}

fn format_err(m: impl Into<String>) -> TrainerError {
    TrainerError::Format(m.into())
}

impl Checkpoint {
    /// `AYN1`, u32 LE header length, JSON header, then every tensor as LE
    /// `f32` in directory order: parameters, then `m.<name>`, then `v.<name>`.
    pub fn to_bytes(&self) -> Result<Vec<u8>, TrainerError> {
        let names = self.weights.names();
        let params = self.weights.tensors();
        let moments = &self.state.optimizer;
        if moments.m.len() != params.len() || moments.v.len() != params.len() {
            return Err(TrainerError::Shape("optimizer moments do not mirror parameters".into()));
        }
        let mut tensors: Vec<(String, &Tensor)> = Vec::new();
        tensors.extend(names.iter().cloned().zip(params.iter().copied()));
        tensors.extend(names.iter().map(|n| format!("m.{n}")).zip(moments.m.iter()));
        tensors.extend(names.iter().map(|n| format!("v.{n}")).zip(moments.v.iter()));

        let mut offset = 0;
        let mut entries = Vec::with_capacity(tensors.len());
        for (name, t) in &tensors {
            entries.push(TensorEntry { name: name.clone(), shape: t.shape().to_vec(), offset });
            offset += t.numel() * 4;
        }
        let header = Header {
            version: VERSION,
            config: self.config.clone(),
            plan: self.plan.clone(),
            step: self.state.step,
            seed: self.state.seed,
            loss_window: self.state.loss_window.clone(),
            tensors: entries,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(8 + json.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &tensors {
            out.extend_from_slice(&t.to_f32_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainerError> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(format_err("missing AYN1 magic"));
        }
        let header_len = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
        let payload_start = 8usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| format_err("truncated header"))?;
        let header: Header =
            serde_json::from_slice(&bytes[8..payload_start]).map_err(|e| format_err(format!("bad header: {e}")))?;
        if header.version != VERSION {
            return Err(format_err(format!("unsupported version {}", header.version)));
        }
        let template = ModelWeights::shape_template(&header.config)?;
        let names = template.names();
        let n = names.len();
        if header.tensors.len() != 3 * n {
            return Err(format_err(format!("{} tensors, expected {}", header.tensors.len(), 3 * n)));
        }
        let payload = &bytes[payload_start..];
        let mut expected_offset = 0;
        let mut read = Vec::with_capacity(3 * n);
        for (i, entry) in header.tensors.iter().enumerate() {
            let want = match i / n {
                0 => names[i % n].clone(),
                1 => format!("m.{}", names[i % n]),
                _ => format!("v.{}", names[i % n]),
            };
            if entry.name != want || entry.offset != expected_offset {
                return Err(format_err(format!("unexpected tensor entry {:?} (wanted {want})", entry.name)));
            }
            let size = entry.shape.iter().product::<usize>() * 4;
            let end = entry.offset + size;
            if end > payload.len() {
                return Err(format_err(format!("truncated payload in {}", entry.name)));
            }
            read.push(Tensor::from_f32_le_bytes(entry.shape.clone(), &payload[entry.offset..end])?);
            expected_offset = end;
        }
        if expected_offset != payload.len() {
            return Err(format_err(format!("{} trailing bytes", payload.len() - expected_offset)));
        }
        let v = read.split_off(2 * n);
        let m = read.split_off(n);
        let weights = ModelWeights::from_tensors(&header.config, read)?;
        for (i, p) in weights.tensors().iter().enumerate() {
            if m[i].shape() != p.shape() || v[i].shape() != p.shape() {
                return Err(format_err(format!("moment shapes of {} do not match", names[i])));
            }
        }
        Ok(Self {
            config: header.config,
            plan: header.plan,
            weights,
            state: TrainState {
                step: header.step,
                seed: header.seed,
                optimizer: AdamState { m, v, t: header.step },
                loss_window: header.loss_window,
            },
        })
    }

    /// Writes to a sibling temporary file and renames it into place, so an
    /// interrupted save leaves the previous checkpoint intact.
    pub fn save(&self, path: &Path) -> Result<(), TrainerError> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainerError> {
        Self::from_bytes(&fs::read(path)?)
    }
}
