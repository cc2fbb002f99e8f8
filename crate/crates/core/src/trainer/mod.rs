//! Pretraining and instruction fine-tuning: schedule, clipping, AdamW,
//! gradient accumulation, checkpoints and the metrics stream.

mod checkpoint;
mod metrics;
mod optim;
mod plan;
mod train;

use thiserror::Error;

use crate::error::KernelError;
use crate::model::ModelError;

pub use checkpoint::{Checkpoint, MAGIC};
pub use metrics::{read_metrics, JsonlSink, MemorySink, MetricsSink, NullSink, StepRecord};
pub use optim::{adamw_step, clip_gradients, global_norm, AdamState, AdamWConfig};
pub use plan::{lr_at, SchedulerKind, TrainPlan, ADAM_EPS};
pub use train::{
    batch_gradients, evaluate, finetune, pretrain, step_indices, FinetuneReport, FinetuneRun, StepOutcome,
    TrainOptions, Trainer, LOSS_WINDOW,
};

/// Optimizer progress. Gradient buffers live only inside an update.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub optimizer: AdamState,
    /// Seeds the data order.
    pub seed: u64,
    /// Most recent update losses, oldest first.
    pub loss_window: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
