use super::plan::ADAM_EPS;
use super::TrainerError;
use crate::tensor::Tensor;

/// Global L2 norm over every gradient value.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt()
}

/// Rescales all gradients by `max_norm / norm` when the global norm exceeds
/// `max_norm`. Returns the norm before clipping.
pub fn clip_gradients(grads: &mut [Tensor], max_norm: f64) -> Result<f64, TrainerError> {
    if !(max_norm > 0.0) {
        return Err(TrainerError::Plan(format!("max_norm {max_norm} must be positive")));
    }
    let norm = global_norm(grads);
    if !norm.is_finite() {
        return Err(TrainerError::Numeric(format!("gradient norm is {norm}")));
    }
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
    }
    Ok(norm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.95, eps: ADAM_EPS }
    }
}

/// First and second moments, one pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    /// Updates applied so far.
    pub t: u64,
}

impl AdamState {
    pub fn zeros_like(params: &[&Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
        }
    }
}

/// One decoupled-decay Adam update:
/// `p ← p − lr·m̂/(√v̂ + eps) − lr·wd·p`, where `decay[i]` says whether
/// parameter `i` takes weight decay.
pub fn adamw_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    decay: &[bool],
    lr: f64,
    weight_decay: f64,
    cfg: AdamWConfig,
) -> Result<(), TrainerError> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n || decay.len() != n {
        return Err(TrainerError::Shape(format!(
            "{n} params, {} grads, {} moments, {} decay flags",
            grads.len(),
            state.m.len(),
            decay.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if p.shape() != grads[i].shape() || p.shape() != state.m[i].shape() || p.shape() != state.v[i].shape() {
            return Err(TrainerError::Shape(format!(
                "parameter {i}: shape {:?}, gradient {:?}",
                p.shape(),
                grads[i].shape()
            )));
        }
    }
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for i in 0..n {
        let wd = if decay[i] { weight_decay } else { 0.0 };
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        for (mj, gj) in m.iter_mut().zip(g) {
            *mj = cfg.beta1 * *mj + (1.0 - cfg.beta1) * gj;
        }
        let v = state.v[i].data_mut();
        for (vj, gj) in v.iter_mut().zip(g) {
            *vj = cfg.beta2 * *vj + (1.0 - cfg.beta2) * gj * gj;
        }
        let (m, v) = (state.m[i].data(), state.v[i].data());
        for ((pj, mj), vj) in params[i].data_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mj / bc1;
            let v_hat = vj / bc2;
            *pj = *pj - lr * m_hat / (v_hat.sqrt() + cfg.eps) - lr * wd * *pj;
        }
    }
    Ok(())
}
