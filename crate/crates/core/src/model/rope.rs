use super::ModelError;
use crate::kernels;
use crate::tensor::Tensor;

/// Rotary angle multiplier for each position: `position / shrink_factor`.
pub fn effective_positions(position_ids: &[i64], shrink_factor: f64) -> Result<Vec<f64>, ModelError> {
    if !(shrink_factor >= 1.0) || !shrink_factor.is_finite() {
        return Err(ModelError::Config(format!("shrink_factor must be >= 1, got {shrink_factor}")));
    }
    position_ids
        .iter()
        .map(|&p| {
            if p < 0 {
                Err(ModelError::Domain(format!("negative position id {p}")))
            } else {
                Ok(p as f64 / shrink_factor)
            }
        })
        .collect()
}

/// Positions `0..len` after shrinking.
pub fn sequence_positions(len: usize, shrink_factor: f64) -> Vec<f64> {
    (0..len).map(|p| p as f64 / shrink_factor).collect()
}

/// Rotates `[T, H, head_dim]` query or key vectors: pair `i` of the token at
/// angle multiplier `m` turns by `m · theta^(−2i/head_dim)`.
pub fn apply_rope(x: &Tensor, positions: &[f64], theta: f64) -> Result<Tensor, ModelError> {
    if x.rank() != 3 {
        return Err(ModelError::Config(format!("apply_rope expects [T, H, head_dim], got {:?}", x.shape())));
    }
    let head_dim = x.last_dim();
    if !head_dim.is_multiple_of(2) {
        return Err(ModelError::Config(format!("head_dim {head_dim} is odd")));
    }
    Ok(kernels::rope_rotate(x, positions, theta, head_dim, 1.0)?)
}
