use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::TrainerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    Cosine,
    Constant,
    Linear,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 3] = [SchedulerKind::Cosine, SchedulerKind::Constant, SchedulerKind::Linear];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Cosine => "cosine",
            SchedulerKind::Constant => "constant",
            SchedulerKind::Linear => "linear",
        }
    }
}

impl std::str::FromStr for SchedulerKind {
    type Err = TrainerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "constant" => Ok(Self::Constant),
            "linear" => Ok(Self::Linear),
            other => Err(TrainerError::Plan(format!("unknown scheduler {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub max_lr: f64,
    pub min_lr: f64,
    pub warmup_steps: u64,
    pub lr_decay_steps: u64,
    /// Optimizer updates to run.
    pub max_steps: u64,
    pub batch_size: usize,
    pub grad_accum_steps: usize,
    pub seq_len: usize,
    pub grad_clip_norm: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub scheduler: SchedulerKind,
    pub epochs: u32,
    pub seed: u64,
    /// Ignore prompt tokens in the instruction loss.
    pub mask_prompt: bool,
}

pub const ADAM_EPS: f64 = 1e-8;

impl TrainPlan {
    /// 100k updates of 8 × 8 sequences of 8192 tokens, peak lr 3e-3 reached
    /// after 1000 warmup updates and decayed to a tenth of that.
    pub fn full_scale() -> Self {
        Self {
            max_lr: 0.003,
            min_lr: 0.0003,
            warmup_steps: 1000,
            lr_decay_steps: 100_000,
            max_steps: 100_000,
            batch_size: 8,
            grad_accum_steps: 8,
            seq_len: 8192,
            grad_clip_norm: 1.0,
            weight_decay: 0.1,
            beta1: 0.9,
            beta2: 0.95,
            scheduler: SchedulerKind::Cosine,
            epochs: 1,
            seed: 0,
            mask_prompt: false,
        }
    }

    /// Pretraining plan with `min_lr = max_lr / 10` and decay over all steps.
    pub fn pretraining(max_lr: f64, warmup_steps: u64, max_steps: u64) -> Self {
        Self { max_lr, min_lr: max_lr / 10.0, warmup_steps, lr_decay_steps: max_steps, max_steps, ..Self::full_scale() }
    }

    /// Full fine-tuning for `epochs` passes over `n_examples`: lr 2e-5, no
    /// weight decay, warmup over 5% of the updates, decay to zero.
    pub fn finetune(
        n_examples: usize,
        batch_size: usize,
        grad_accum_steps: usize,
        epochs: u32,
        kind: SchedulerKind,
    ) -> Self {
        let per_step = (batch_size * grad_accum_steps).max(1);
        let total = (n_examples * epochs as usize).div_ceil(per_step).max(1) as u64;
        Self {
            max_lr: 2e-5,
            min_lr: 0.0,
            warmup_steps: (0.05 * total as f64).round() as u64,
            lr_decay_steps: total,
            max_steps: total,
            batch_size,
            grad_accum_steps,
            seq_len: 512,
            weight_decay: 0.0,
            scheduler: kind,
            epochs,
            ..Self::full_scale()
        }
    }

    pub fn tokens_per_iteration(&self) -> usize {
        self.batch_size * self.grad_accum_steps * self.seq_len
    }

    pub fn sequences_per_step(&self) -> usize {
        self.batch_size * self.grad_accum_steps
    }

    pub fn validate(&self) -> Result<(), TrainerError> {
        let fail = |m: String| Err(TrainerError::Plan(m));
        if self.warmup_steps >= self.lr_decay_steps {
            return fail(format!("warmup {} must be below decay steps {}", self.warmup_steps, self.lr_decay_steps));
        }
        if self.batch_size == 0 || self.grad_accum_steps == 0 || self.seq_len < 2 {
            return fail("batch_size and grad_accum_steps must be positive and seq_len at least 2".into());
        }
        if !(self.max_lr > 0.0) || !(self.min_lr >= 0.0) || self.min_lr > self.max_lr {
            return fail(format!("need 0 <= min_lr {} <= max_lr {}", self.min_lr, self.max_lr));
        }
        if !(self.grad_clip_norm > 0.0) {
            return fail("grad_clip_norm must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.weight_decay >= 0.0) {
            return fail("betas must lie in [0, 1) and weight_decay must be nonnegative".into());
        }
        if self.epochs == 0 {
            return fail("epochs must be positive".into());
        }
        Ok(())
    }
}

/// Learning rate for update `t` (updates are numbered from 1).
pub fn lr_at(plan: &TrainPlan, t: u64) -> f64 {
    if plan.warmup_steps > 0 && t <= plan.warmup_steps {
        return plan.max_lr * t as f64 / plan.warmup_steps as f64;
    }
    if t > plan.lr_decay_steps {
        return match plan.scheduler {
            SchedulerKind::Constant => plan.max_lr,
            _ => plan.min_lr,
        };
    }
    let ratio = (t - plan.warmup_steps) as f64 / (plan.lr_decay_steps - plan.warmup_steps) as f64;
    let span = plan.max_lr - plan.min_lr;
    match plan.scheduler {
        SchedulerKind::Cosine => plan.min_lr + 0.5 * (1.0 + (PI * ratio).cos()) * span,
        SchedulerKind::Linear => plan.min_lr + (1.0 - ratio) * span,
        SchedulerKind::Constant => plan.max_lr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_scale_endpoints() {
        let p = TrainPlan::full_scale();
        assert_eq!(lr_at(&p, 0), 0.0);
        assert_eq!(lr_at(&p, 1000), 0.003);
        assert_eq!(lr_at(&p, 100_000), 0.0003);
        assert!((lr_at(&p, 50_500) - 0.00165).abs() < 1e-9);
        assert_eq!(lr_at(&p, 200_000), 0.0003);
        assert_eq!(p.tokens_per_iteration(), 524_288);
        assert!((p.min_lr - 0.1 * p.max_lr).abs() < 1e-15);
        p.validate().unwrap();
    }

    #[test]
    fn pretraining_min_lr_is_a_tenth() {
        let p = TrainPlan::pretraining(0.003, 1000, 100_000);
        assert!((p.min_lr - 0.0003).abs() < 1e-15 * 0.0003);
        assert_eq!(TrainPlan { min_lr: 0.0003, ..p }, TrainPlan::full_scale());
    }

    #[test]
    fn finetune_plan() {
        let p = TrainPlan::finetune(1000, 4, 2, 3, SchedulerKind::Constant);
        assert_eq!(p.max_steps, 375);
        assert_eq!(p.warmup_steps, 19);
        assert_eq!(p.weight_decay, 0.0);
        for t in p.warmup_steps..p.max_steps + 10 {
            assert_eq!(lr_at(&p, t), 2e-5);
        }
        let lin = TrainPlan { scheduler: SchedulerKind::Linear, ..p.clone() };
        assert_eq!(lr_at(&lin, lin.lr_decay_steps), 0.0);
        let cos = TrainPlan { scheduler: SchedulerKind::Cosine, ..p };
        assert_eq!(lr_at(&cos, cos.lr_decay_steps), 0.0);
    }

    #[test]
    fn no_warmup_starts_at_peak() {
        let p = TrainPlan { warmup_steps: 0, ..TrainPlan::pretraining(1.0, 0, 10) };
        assert_eq!(lr_at(&p, 0), 1.0);
    }

    #[test]
    fn invalid_plans() {
        let p = TrainPlan { warmup_steps: 10, lr_decay_steps: 10, ..TrainPlan::full_scale() };
        assert!(p.validate().is_err());
        assert!(TrainPlan { batch_size: 0, ..TrainPlan::full_scale() }.validate().is_err());
        assert!("cosine".parse::<SchedulerKind>().is_ok());
        assert!("step".parse::<SchedulerKind>().is_err());
    }

    #[test]
    fn continuity_at_the_joints() {
        let p = TrainPlan::full_scale();
        let w = p.warmup_steps;
        assert!((lr_at(&p, w + 1) - lr_at(&p, w)).abs() < 1e-8);
        let d = p.lr_decay_steps;
        assert!((lr_at(&p, d - 1) - lr_at(&p, d)).abs() < 1e-8);
        assert_eq!(lr_at(&p, d + 1), lr_at(&p, d));
    }

    proptest! {
        #[test]
        fn cosine_strictly_decreasing(t in 1001u64..99_999) {
            let p = TrainPlan::full_scale();
            prop_assert!(lr_at(&p, t + 1) < lr_at(&p, t));
        }

        #[test]
        fn warmup_increasing(t in 0u64..1000) {
            let p = TrainPlan::full_scale();
            prop_assert!(lr_at(&p, t + 1) > lr_at(&p, t));
        }
    }
}
