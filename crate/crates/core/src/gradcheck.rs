//! Central finite-difference verification of tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::KernelError;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-4;

/// Denominator floor for the relative error, so components whose true
/// gradient is below the finite-difference truncation error are compared on
/// an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(input index, element index)` of the worst component.
    pub worst: (usize, usize),
    pub tolerance: f64,
    pub checked: usize,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Compares the analytic gradient of `op` at `inputs` with central finite
/// differences. Non-scalar outputs are reduced with a fixed random projection
/// so every output component contributes.
pub fn grad_check<F>(op: F, inputs: &[Tensor], tolerance: f64) -> Result<GradCheck, KernelError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, KernelError>,
{
    for (i, t) in inputs.iter().enumerate() {
        t.check_finite(&format!("grad_check input {i}"))?;
    }
    let mut projection: Option<Vec<f64>> = None;
    let mut eval = |values: &[Tensor], want_grad: bool| -> Result<(f64, Vec<Tensor>), KernelError> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = op(&tape, &vars)?;
        let n = out.value().numel();
        let scalar = if n == 1 {
            out
        } else {
            let w = projection.get_or_insert_with(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
            });
            tape.weighted_sum(out, w)?
        };
        let value = scalar.value().data()[0];
        if !value.is_finite() {
            return Err(KernelError::NonFinite("grad_check probe".into()));
        }
        if !want_grad {
            return Ok((value, Vec::new()));
        }
        let grads = tape.backward(scalar, 1.0)?;
        let analytic = vars
            .iter()
            .zip(values)
            .map(|(v, t)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect();
        Ok((value, analytic))
    };

    let (_, analytic) = eval(inputs, true)?;
    let mut report = GradCheck { max_rel_error: 0.0, max_abs_error: 0.0, worst: (0, 0), tolerance, checked: 0 };
    let mut probe = inputs.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        for j in 0..probe[i].numel() {
            let orig = probe[i].data()[j];
            probe[i].data_mut()[j] = orig + FD_STEP;
            let (plus, _) = eval(&probe, false)?;
            probe[i].data_mut()[j] = orig - FD_STEP;
            let (minus, _) = eval(&probe, false)?;
            probe[i].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = grad.data()[j];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (i, j);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_op_matches_exactly() {
        let x = Tensor::new([4], vec![0.1, -0.7, 2.0, 3.5]).unwrap();
        let r = grad_check(|t, v| t.scale(v[0], 2.0), &[x], 1e-9).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.max_abs_error < 1e-9);
    }

    #[test]
    fn detects_wrong_gradient() {
        let x = Tensor::new([2], vec![1.5, -0.5]).unwrap();
        let r = grad_check(
            |t, v| {
                let value = v[0].value().clone();
                let data: Vec<f64> = value.data().iter().map(|z| z * z).collect();
                // x² computed off-tape: analytic grad 0, numeric grad 2x.
                let detached = t.leaf(Tensor::new(value.shape(), data)?);
                t.add(detached, t.scale(v[0], 0.0)?)
            },
            &[x],
            1e-4,
        )
        .unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn rejects_non_finite_inputs() {
        let mut x = Tensor::zeros([1]);
        x.data_mut()[0] = f64::INFINITY;
        assert!(matches!(grad_check(|t, v| t.scale(v[0], 1.0), &[x], 1e-4), Err(KernelError::NonFinite(_))));
    }
}
