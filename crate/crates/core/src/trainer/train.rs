use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::checkpoint::Checkpoint;
use super::metrics::{MetricsSink, StepRecord};
use super::optim::{adamw_step, clip_gradients, AdamState, AdamWConfig};
use super::plan::{lr_at, SchedulerKind, TrainPlan, ADAM_EPS};
use super::{TrainState, TrainerError};
use crate::accounting::{flops_per_token, mfu, perplexity};
use crate::datapipe::{Sequence, IGNORE_INDEX};
use crate::kernels::cross_entropy;
use crate::model::{forward, forward_tape, ModelConfig, ModelWeights, ParamVars};
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Losses kept in [`TrainState::loss_window`].
pub const LOSS_WINDOW: usize = 50;

/// Dataset position `k` of an epoch-major visiting order: epoch `e` is a
/// permutation drawn from stream `e` of a generator seeded with `seed`.
fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Example indices used by update `step` (from 1). Depends only on its
/// arguments, so a resumed run sees the same data. With `limit`, positions
/// past `limit` in the visiting order are not used.
pub fn step_indices(n: usize, per_step: usize, seed: u64, step: u64, limit: Option<u64>) -> Vec<usize> {
    if n == 0 || step == 0 {
        return Vec::new();
    }
    let start = (step - 1) * per_step as u64;
    let mut end = start + per_step as u64;
    if let Some(limit) = limit {
        end = end.min(limit);
    }
    let mut orders: HashMap<u64, Vec<usize>> = HashMap::new();
    (start..end)
        .map(|k| {
            let epoch = k / n as u64;
            orders.entry(epoch).or_insert_with(|| epoch_order(seed, epoch, n))[(k % n as u64) as usize]
        })
        .collect()
}

struct SequenceGrad {
    grads: Vec<Tensor>,
    nll_sum: f64,
}

/// Gradient of `count · mean_nll · scale` for one sequence.
fn sequence_grad(
    weights: &ModelWeights,
    config: &ModelConfig,
    seq: &Sequence,
    scale: f64,
) -> Result<Option<SequenceGrad>, TrainerError> {
    let (inputs, targets) = seq.trimmed();
    if inputs.is_empty() {
        return Ok(None);
    }
    let tape = Tape::new();
    let params = ParamVars::bind(&tape, weights);
    let logits = forward_tape(&tape, &params, config, inputs)?;
    let (loss, value) = tape.cross_entropy(logits, targets, IGNORE_INDEX)?;
    let mut grads = tape.backward(loss, value.token_count as f64 * scale)?;
    let grads = params
        .vars()
        .into_iter()
        .map(|v| {
            let shape = v.value().shape().to_vec();
            grads.take(v).unwrap_or_else(|| Tensor::zeros(shape))
        })
        .collect();
    Ok(Some(SequenceGrad { grads, nll_sum: value.mean_nll * value.token_count as f64 }))
}

/// Summed gradients of the token-mean loss over `batch`, with mean loss and
/// target count. Sequences run in parallel within each micro-batch of
/// `micro` sequences; sums run in batch order.
pub fn batch_gradients(
    weights: &ModelWeights,
    config: &ModelConfig,
    batch: &[&Sequence],
    micro: usize,
) -> Result<(Vec<Tensor>, f64, usize), TrainerError> {
    let total: usize = batch.iter().map(|s| s.target_count()).sum();
    if total == 0 {
        return Err(TrainerError::Data("update has no target tokens".into()));
    }
    let scale = 1.0 / total as f64;
    let mut acc: Vec<Tensor> = weights.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut nll = 0.0;
    for chunk in batch.chunks(micro.max(1)) {
        let parts: Vec<Option<SequenceGrad>> =
            chunk.par_iter().map(|s| sequence_grad(weights, config, s, scale)).collect::<Result<_, _>>()?;
        for part in parts.into_iter().flatten() {
            for (a, g) in acc.iter_mut().zip(&part.grads) {
                a.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += y);
            }
            nll += part.nll_sum;
        }
    }
    Ok((acc, nll / total as f64, total))
}

/// Token-weighted mean negative log-likelihood over `data`.
pub fn evaluate(weights: &ModelWeights, config: &ModelConfig, data: &[Sequence]) -> Result<f64, TrainerError> {
    let parts: Vec<(f64, usize)> = data
        .par_iter()
        .map(|s| {
            let (inputs, targets) = s.trimmed();
            if inputs.is_empty() {
                return Ok((0.0, 0));
            }
            let logits = forward(weights, config, inputs)?;
            let l = cross_entropy(&logits, targets, IGNORE_INDEX)?;
            Ok((l.mean_nll * l.token_count as f64, l.token_count))
        })
        .collect::<Result<_, TrainerError>>()?;
    let (sum, count) = parts.iter().fold((0.0, 0), |(s, c), &(a, b)| (s + a, c + b));
    if count == 0 {
        return Err(TrainerError::Data("evaluation data has no target tokens".into()));
    }
    Ok(sum / count as f64)
}

/// Result of one optimizer update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
    pub tokens: usize,
}

/// A model, its plan and its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub config: ModelConfig,
    pub plan: TrainPlan,
    pub weights: ModelWeights,
    pub state: TrainState,
    /// Total example visits allowed; `None` cycles through the data.
    pub example_limit: Option<u64>,
}

impl Trainer {
    /// Fresh weights drawn from `plan.seed`.
    pub fn new(config: ModelConfig, plan: TrainPlan) -> Result<Self, TrainerError> {
        let weights = ModelWeights::init(&config, plan.seed)?;
        Self::with_weights(config, plan, weights)
    }

    pub fn with_weights(config: ModelConfig, plan: TrainPlan, weights: ModelWeights) -> Result<Self, TrainerError> {
        plan.validate()?;
        config.validate()?;
        if plan.seq_len > config.max_context {
            return Err(TrainerError::Plan(format!(
                "seq_len {} exceeds the model context {}",
                plan.seq_len, config.max_context
            )));
        }
        let state = TrainState {
            step: 0,
            optimizer: AdamState::zeros_like(&weights.tensors()),
            seed: plan.seed,
            loss_window: Vec::new(),
        };
        Ok(Self { config, plan, weights, state, example_limit: None })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self, TrainerError> {
        ckpt.plan.validate()?;
        Ok(Self { config: ckpt.config, plan: ckpt.plan, weights: ckpt.weights, state: ckpt.state, example_limit: None })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            plan: self.plan.clone(),
            weights: self.weights.clone(),
            state: self.state.clone(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.plan.max_steps
    }

    /// Accumulates gradients over the update's sequences, clips, and applies
    /// AdamW at `lr_at(step)`. Parameters and moments are kept at `f32`
    /// precision. On error the weights are left unchanged.
    pub fn step(&mut self, data: &[Sequence]) -> Result<StepOutcome, TrainerError> {
        let t = self.state.step + 1;
        let idx = step_indices(data.len(), self.plan.sequences_per_step(), self.state.seed, t, self.example_limit);
        if idx.is_empty() {
            return Err(TrainerError::Data(format!("no examples left for update {t}")));
        }
        let batch: Vec<&Sequence> = idx.iter().map(|&i| &data[i]).collect();
        let (mut grads, loss, tokens) = batch_gradients(&self.weights, &self.config, &batch, self.plan.batch_size)?;
        let grad_norm = clip_gradients(&mut grads, self.plan.grad_clip_norm)?;
        let lr = lr_at(&self.plan, t);

        let mut weights = self.weights.clone();
        let mut optimizer = self.state.optimizer.clone();
        let mut decay = Vec::new();
        weights.visit(|_, role, _| decay.push(role.decays()));
        {
            let mut params: Vec<&mut Tensor> = Vec::new();
            collect_mut(&mut weights, &mut params);
            let cfg = AdamWConfig { beta1: self.plan.beta1, beta2: self.plan.beta2, eps: ADAM_EPS };
            adamw_step(&mut params, &grads, &mut optimizer, &decay, lr, self.plan.weight_decay, cfg)?;
            for p in params {
                p.round_to_f32();
                p.check_finite("updated parameter").map_err(|e| TrainerError::Numeric(format!("update {t}: {e}")))?;
            }
        }
        optimizer.m.iter_mut().chain(optimizer.v.iter_mut()).for_each(Tensor::round_to_f32);

        self.weights = weights;
        self.state.optimizer = optimizer;
        self.state.step = t;
        self.state.loss_window.push(loss);
        if self.state.loss_window.len() > LOSS_WINDOW {
            self.state.loss_window.remove(0);
        }
        Ok(StepOutcome { step: t, loss, lr, grad_norm, tokens })
    }
}

fn collect_mut<'a>(w: &'a mut ModelWeights, out: &mut Vec<&'a mut Tensor>) {
    out.push(&mut w.token_embedding);
    for l in &mut w.layers {
        out.extend([
            &mut l.attn_norm,
            &mut l.wq,
            &mut l.wk,
            &mut l.wv,
            &mut l.wo,
            &mut l.ffn_norm,
            &mut l.w1,
            &mut l.w3,
            &mut l.w2,
        ]);
    }
    out.push(&mut w.final_norm);
}

/// Loop settings that do not affect the trained weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    /// Hardware peak used for the MFU column.
    pub peak_flops: f64,
    /// Validate every this many updates and after the last; 0 disables.
    pub eval_interval: u64,
    pub checkpoint_path: Option<PathBuf>,
    /// Save every this many updates and after the last; 0 saves only at the end.
    pub checkpoint_every: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { peak_flops: 1e12, eval_interval: 0, checkpoint_path: None, checkpoint_every: 0 }
    }
}

/// Runs updates until `plan.max_steps`, reporting each to `sink`. If an
/// update fails, the run stops with the error and the last checkpoint on
/// disk is the last good state.
pub fn pretrain(
    trainer: &mut Trainer,
    train: &[Sequence],
    val: &[Sequence],
    options: &TrainOptions,
    sink: &mut dyn MetricsSink,
) -> Result<TrainState, TrainerError> {
    if train.is_empty() {
        return Err(TrainerError::Data("empty training set".into()));
    }
    let fpt = flops_per_token(&trainer.config, trainer.plan.seq_len);
    let started = Instant::now();
    while !trainer.is_done() {
        let t0 = Instant::now();
        let out = trainer.step(train)?;
        let secs = t0.elapsed().as_secs_f64().max(1e-9);
        let tps = out.tokens as f64 / secs;
        let last = trainer.is_done();
        let mut record = StepRecord {
            step: out.step,
            loss: out.loss,
            perplexity: perplexity(out.loss),
            lr: out.lr,
            grad_norm: out.grad_norm,
            tokens: out.tokens,
            tokens_per_sec: tps,
            mfu: mfu(tps, fpt, options.peak_flops).map_err(|e| TrainerError::Plan(e.to_string()))?,
            elapsed_sec: started.elapsed().as_secs_f64(),
            val_loss: None,
            val_perplexity: None,
        };
        if !val.is_empty() && options.eval_interval > 0 && (out.step % options.eval_interval == 0 || last) {
            let v = evaluate(&trainer.weights, &trainer.config, val)?;
            if !v.is_finite() {
                return Err(TrainerError::Numeric(format!("validation loss {v} at update {}", out.step)));
            }
            record.val_loss = Some(v);
            record.val_perplexity = Some(perplexity(v));
        }
        sink.on_step(&record)?;
        if let Some(path) = &options.checkpoint_path {
            if last || (options.checkpoint_every > 0 && out.step % options.checkpoint_every == 0) {
                trainer.checkpoint().save(path)?;
                sink.on_checkpoint(out.step, path)?;
            }
        }
    }
    Ok(trainer.state.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneRun {
    pub scheduler: SchedulerKind,
    pub val_loss: f64,
    pub val_perplexity: f64,
    pub steps: u64,
    pub weights: ModelWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneReport {
    pub runs: Vec<FinetuneRun>,
}

impl FinetuneReport {
    /// The run with the lowest validation loss (first on ties).
    pub fn best(&self) -> Option<&FinetuneRun> {
        self.runs.iter().fold(None, |best: Option<&FinetuneRun>, r| match best {
            Some(b) if b.val_loss <= r.val_loss => Some(b),
            _ => Some(r),
        })
    }
}

/// Full-parameter fine-tuning from `base`, once per scheduler kind, for
/// `template.epochs` passes over `train`. Each example is visited once per
/// epoch in a seeded order; warmup happens once over the whole run.
pub fn finetune(
    config: &ModelConfig,
    base: &ModelWeights,
    train: &[Sequence],
    val: &[Sequence],
    template: &TrainPlan,
    kinds: &[SchedulerKind],
    options: &TrainOptions,
    sink: &mut dyn MetricsSink,
) -> Result<FinetuneReport, TrainerError> {
    if train.is_empty() || val.is_empty() {
        return Err(TrainerError::Data("fine-tuning needs training and validation examples".into()));
    }
    let mut runs = Vec::new();
    for &kind in kinds {
        let plan = TrainPlan {
            scheduler: kind,
            ..TrainPlan::finetune(train.len(), template.batch_size, template.grad_accum_steps, template.epochs, kind)
        };
        let plan = TrainPlan {
            max_lr: template.max_lr,
            min_lr: template.min_lr,
            weight_decay: template.weight_decay,
            seq_len: template.seq_len,
            grad_clip_norm: template.grad_clip_norm,
            beta1: template.beta1,
            beta2: template.beta2,
            seed: template.seed,
            mask_prompt: template.mask_prompt,
            ..plan
        };
        let mut trainer = Trainer::with_weights(config.clone(), plan, base.clone())?;
        trainer.example_limit = Some(train.len() as u64 * trainer.plan.epochs as u64);
        let opts = TrainOptions { eval_interval: 0, ..options.clone() };
        pretrain(&mut trainer, train, &[], &opts, sink)?;
        let val_loss = evaluate(&trainer.weights, config, val)?;
        runs.push(FinetuneRun {
            scheduler: kind,
            val_loss,
            val_perplexity: perplexity(val_loss),
            steps: trainer.state.step,
            weights: trainer.weights,
        });
    }
    Ok(FinetuneReport { runs })
}
