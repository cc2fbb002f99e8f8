//! Dense row-major tensor used for activations, weights and gradients.
//!
//! Values are held as `f64` so every reduction accumulates in double
//! precision. Trainable parameters and optimizer moments are rounded to
//! `f32` after each update ([`Tensor::round_to_f32`]), which makes `f32` the
//! storage precision: checkpoints serialize `f32` and reload bit-exactly.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::KernelError;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<_> = self.data.iter().take(8).collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &preview)
            .field("requires_grad", &self.requires_grad)
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self, KernelError> {
        let shape = shape.into();
        if shape.contains(&0) {
            return Err(KernelError::Shape(format!("zero extent in shape {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(KernelError::Shape(format!("shape {shape:?} needs {numel} values, got {}", data.len())));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(KernelError::NonFinite(format!("element {pos} of new tensor")));
        }
        Ok(Self { shape, data, requires_grad: false, grad: None })
    }

    /// Builds a tensor whose data is already known to be valid for `shape`.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data, requires_grad: false, grad: None }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self::from_parts(shape, vec![0.0; n])
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self::from_parts(shape, vec![1.0; n])
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros([n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, KernelError> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(KernelError::Shape("ragged rows".into()));
        }
        Self::new([rows.len(), cols], rows.concat())
    }

    /// Normal(0, std) initialization.
    pub fn randn<R: Rng + ?Sized>(shape: impl Into<Vec<usize>>, std: f64, rng: &mut R) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
        Self::from_parts(shape, data)
    }

    pub fn uniform<R: Rng + ?Sized>(shape: impl Into<Vec<usize>>, lo: f64, hi: f64, rng: &mut R) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
        Self::from_parts(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Extent of the last axis.
    pub fn last_dim(&self) -> usize {
        *self.shape.last().expect("tensor has at least one axis")
    }

    /// Number of rows when viewed as `[numel / last_dim, last_dim]`.
    pub fn rows(&self) -> usize {
        self.numel() / self.last_dim()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.last_dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Self, KernelError> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.numel() || shape.contains(&0) {
            return Err(KernelError::Shape(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        Ok(Self::from_parts(shape, self.data.clone()))
    }

    pub fn check_finite(&self, op: &str) -> Result<(), KernelError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(pos) => Err(KernelError::NonFinite(format!("{op}: element {pos}"))),
            None => Ok(()),
        }
    }

    /// Rounds every value (and the gradient, if present) to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
        if let Some(g) = &mut self.grad {
            for v in g {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Adds `delta` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[f64]) -> Result<(), KernelError> {
        if delta.len() != self.numel() {
            return Err(KernelError::Shape(format!(
                "gradient of {} values for tensor of {}",
                delta.len(),
                self.numel()
            )));
        }
        let grad = self.grad.get_or_insert_with(|| vec![0.0; delta.len()]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Little-endian `f32` payload, row-major.
    pub fn to_f32_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.numel() * 4);
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_f32_le_bytes(shape: Vec<usize>, bytes: &[u8]) -> Result<Self, KernelError> {
        let numel: usize = shape.iter().product();
        if bytes.len() != numel * 4 {
            return Err(KernelError::Shape(format!(
                "payload of {} bytes does not hold {numel} f32 values",
                bytes.len()
            )));
        }
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        Self::new(shape, data)
    }
}
