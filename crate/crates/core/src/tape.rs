//! Reverse-mode differentiation over a closed set of whole-tensor ops.
//!
//! A [`Tape`] records each op with the values its backward rule needs; a
//! [`Var`] is an index into it. Tapes are single-threaded; independent
//! sequences each get their own tape and their gradients are summed in a
//! fixed order by the caller.

use std::cell::{Ref, RefCell};

use crate::error::KernelError;
use crate::kernels::{self, AttentionShape, LossValue};
use crate::tensor::Tensor;

enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulBt(usize, usize),
    Add(usize, usize),
    Mul(usize, usize),
    Silu(usize),
    Scale(usize, f64),
    Reshape(usize),
    RmsNorm { x: usize, w: usize, inv_rms: Vec<f64> },
    Embedding { table: usize, ids: Vec<usize> },
    Rope { x: usize, positions: Vec<f64>, theta: f64, head_dim: usize },
    Attention { q: usize, k: usize, v: usize, shape: AttentionShape, probs: Vec<f64> },
    CrossEntropy { logits: usize, targets: Vec<usize>, ignore: usize, probs: Vec<f64>, count: usize },
    WeightedSum { x: usize, weights: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({})", self.id)
    }
}

type OpResult<'t> = Result<Var<'t>, KernelError>;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var { tape: self, id: nodes.len() - 1 }
    }

    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, var: Var<'_>) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[var.id].value)
    }

    fn with2<T>(&self, a: Var<'_>, b: Var<'_>, f: impl FnOnce(&Tensor, &Tensor) -> T) -> T {
        let nodes = self.nodes.borrow();
        f(&nodes[a.id].value, &nodes[b.id].value)
    }

    fn with1<T>(&self, a: Var<'_>, f: impl FnOnce(&Tensor) -> T) -> T {
        let nodes = self.nodes.borrow();
        f(&nodes[a.id].value)
    }

    pub fn matmul<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> OpResult<'t> {
        let out = self.with2(a, b, kernels::matmul)?;
        Ok(self.push(out, Op::MatMul(a.id, b.id)))
    }

    /// `a · bᵀ`.
    pub fn matmul_bt<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> OpResult<'t> {
        let out = self.with2(a, b, kernels::matmul_bt)?;
        Ok(self.push(out, Op::MatMulBt(a.id, b.id)))
    }

    pub fn add<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> OpResult<'t> {
        let out = self.with2(a, b, kernels::add)?;
        Ok(self.push(out, Op::Add(a.id, b.id)))
    }

    pub fn mul<'t>(&'t self, a: Var<'t>, b: Var<'t>) -> OpResult<'t> {
        let out = self.with2(a, b, kernels::mul)?;
        Ok(self.push(out, Op::Mul(a.id, b.id)))
    }

    pub fn silu<'t>(&'t self, x: Var<'t>) -> OpResult<'t> {
        let out = self.with1(x, kernels::silu_tensor)?;
        Ok(self.push(out, Op::Silu(x.id)))
    }

    pub fn scale<'t>(&'t self, x: Var<'t>, c: f64) -> OpResult<'t> {
        let out = self.with1(x, |t| {
            let data = t.data().iter().map(|v| v * c).collect();
            let out = Tensor::from_parts(t.shape().to_vec(), data);
            out.check_finite("scale").map(|_| out)
        })?;
        Ok(self.push(out, Op::Scale(x.id, c)))
    }

    pub fn reshape<'t>(&'t self, x: Var<'t>, shape: &[usize]) -> OpResult<'t> {
        let out = self.with1(x, |t| t.reshape(shape))?;
        Ok(self.push(out, Op::Reshape(x.id)))
    }

    pub fn rmsnorm<'t>(&'t self, x: Var<'t>, w: Var<'t>, eps: f64) -> OpResult<'t> {
        let (out, inv_rms) = self.with2(x, w, |x, w| kernels::rmsnorm_forward(x, w, eps))?;
        Ok(self.push(out, Op::RmsNorm { x: x.id, w: w.id, inv_rms }))
    }

    /// Gathers rows of a `[V, d]` table.
    pub fn embedding<'t>(&'t self, table: Var<'t>, ids: &[usize]) -> OpResult<'t> {
        let out = self.with1(table, |t| {
            if t.rank() != 2 {
                return Err(KernelError::Shape(format!("embedding table must be 2-d, got {:?}", t.shape())));
            }
            let (v, d) = (t.shape()[0], t.shape()[1]);
            if ids.is_empty() {
                return Err(KernelError::Shape("embedding of an empty sequence".into()));
            }
            let mut data = Vec::with_capacity(ids.len() * d);
            for &id in ids {
                if id >= v {
                    return Err(KernelError::Index { index: id, bound: v });
                }
                data.extend_from_slice(t.row(id));
            }
            Ok(Tensor::from_parts(vec![ids.len(), d], data))
        })?;
        Ok(self.push(out, Op::Embedding { table: table.id, ids: ids.to_vec() }))
    }

    pub fn rope<'t>(&'t self, x: Var<'t>, positions: &[f64], theta: f64, head_dim: usize) -> OpResult<'t> {
        let out = self.with1(x, |t| kernels::rope_rotate(t, positions, theta, head_dim, 1.0))?;
        Ok(self.push(out, Op::Rope { x: x.id, positions: positions.to_vec(), theta, head_dim }))
    }

    pub fn attention<'t>(&'t self, q: Var<'t>, k: Var<'t>, v: Var<'t>, shape: AttentionShape) -> OpResult<'t> {
        let (out, probs) = {
            let nodes = self.nodes.borrow();
            kernels::attention_forward(&nodes[q.id].value, &nodes[k.id].value, &nodes[v.id].value, shape)?
        };
        Ok(self.push(out, Op::Attention { q: q.id, k: k.id, v: v.id, shape, probs }))
    }

    /// Mean cross-entropy as a `[1]` tensor, plus the loss summary.
    pub fn cross_entropy<'t>(
        &'t self,
        logits: Var<'t>,
        targets: &[usize],
        ignore_index: usize,
    ) -> Result<(Var<'t>, LossValue), KernelError> {
        let (loss, probs) = self.with1(logits, |l| kernels::cross_entropy_forward(l, targets, ignore_index))?;
        let var = self.push(
            Tensor::from_parts(vec![1], vec![loss.mean_nll]),
            Op::CrossEntropy {
                logits: logits.id,
                targets: targets.to_vec(),
                ignore: ignore_index,
                probs,
                count: loss.token_count,
            },
        );
        Ok((var, loss))
    }

    /// `Σ x ⊙ weights` as a `[1]` tensor.
    pub fn weighted_sum<'t>(&'t self, x: Var<'t>, weights: &[f64]) -> OpResult<'t> {
        let out = self.with1(x, |t| {
            if t.numel() != weights.len() {
                return Err(KernelError::Shape(format!("{} weights for {} values", weights.len(), t.numel())));
            }
            let s: f64 = t.data().iter().zip(weights).map(|(a, b)| a * b).sum();
            Tensor::new([1], vec![s])
        })?;
        Ok(self.push(out, Op::WeightedSum { x: x.id, weights: weights.to_vec() }))
    }

    /// Back-propagates from a scalar `output`, seeding its gradient with `seed`.
    pub fn backward(&self, output: Var<'_>, seed: f64) -> Result<Gradients, KernelError> {
        let nodes = self.nodes.borrow();
        if nodes[output.id].value.numel() != 1 {
            return Err(KernelError::Shape(format!(
                "backward needs a scalar output, got {:?}",
                nodes[output.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[output.id] = Some(Tensor::from_parts(nodes[output.id].value.shape().to_vec(), vec![seed]));

        fn acc(grads: &mut [Option<Tensor>], id: usize, delta: Tensor) -> Result<(), KernelError> {
            match &mut grads[id] {
                Some(g) => {
                    for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
                        *a += b;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
            Ok(())
        }

        for id in (0..=output.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let val = |i: usize| &nodes[i].value;
            match &nodes[id].op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (da, db) = kernels::matmul_backward(val(*a), val(*b), &g)?;
                    acc(&mut grads, *a, da)?;
                    acc(&mut grads, *b, db)?;
                }
                Op::MatMulBt(a, b) => {
                    // C = A·Bᵀ: dA = dC·B, dB = dCᵀ·A.
                    let da = kernels::matmul(&g, val(*b))?.reshape(val(*a).shape())?;
                    let db = kernels::matmul_at(&g, val(*a))?;
                    acc(&mut grads, *a, da)?;
                    acc(&mut grads, *b, db)?;
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone())?;
                    acc(&mut grads, *b, g)?;
                }
                Op::Mul(a, b) => {
                    let da = kernels::mul(&g, val(*b))?;
                    let db = kernels::mul(&g, val(*a))?;
                    acc(&mut grads, *a, da)?;
                    acc(&mut grads, *b, db)?;
                }
                Op::Silu(x) => {
                    let data = g.data().iter().zip(val(*x).data()).map(|(d, &z)| d * kernels::silu_grad(z)).collect();
                    acc(&mut grads, *x, Tensor::from_parts(g.shape().to_vec(), data))?;
                }
                Op::Scale(x, c) => {
                    let data = g.data().iter().map(|d| d * c).collect();
                    acc(&mut grads, *x, Tensor::from_parts(g.shape().to_vec(), data))?;
                }
                Op::Reshape(x) => {
                    let dx = g.reshape(val(*x).shape())?;
                    acc(&mut grads, *x, dx)?;
                }
                Op::RmsNorm { x, w, inv_rms } => {
                    let (dx, dw) = kernels::rmsnorm_backward(val(*x), val(*w), inv_rms, &g)?;
                    acc(&mut grads, *x, dx)?;
                    acc(&mut grads, *w, dw)?;
                }
                Op::Embedding { table, ids } => {
                    let shape = val(*table).shape().to_vec();
                    let d = shape[1];
                    let mut dt = vec![0.0; shape[0] * d];
                    for (row, &tok) in g.data().chunks(d).zip(ids) {
                        for (o, v) in dt[tok * d..(tok + 1) * d].iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *table, Tensor::from_parts(shape, dt))?;
                }
                Op::Rope { x, positions, theta, head_dim } => {
                    let dx = kernels::rope_rotate(&g, positions, *theta, *head_dim, -1.0)?;
                    acc(&mut grads, *x, dx)?;
                }
                Op::Attention { q, k, v, shape, probs } => {
                    let (dq, dk, dv) = kernels::attention_backward(val(*q), val(*k), val(*v), probs, &g, *shape)?;
                    acc(&mut grads, *q, dq)?;
                    acc(&mut grads, *k, dk)?;
                    acc(&mut grads, *v, dv)?;
                }
                Op::CrossEntropy { logits, targets, ignore, probs, count } => {
                    let mut dl = kernels::cross_entropy_backward(probs, val(*logits).shape(), targets, *ignore, *count);
                    let s = g.data()[0];
                    dl.data_mut().iter_mut().for_each(|v| *v *= s);
                    acc(&mut grads, *logits, dl)?;
                }
                Op::WeightedSum { x, weights } => {
                    let s = g.data()[0];
                    let data = weights.iter().map(|w| w * s).collect();
                    acc(&mut grads, *x, Tensor::from_parts(val(*x).shape().to_vec(), data))?;
                }
            }
        }
        for (id, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                g.check_finite(&format!("gradient of node {id}"))?;
            }
        }
        Ok(Gradients { grads })
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        self.tape.value(*self)
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }
}

/// Gradients of one backward pass, indexed by [`Var`]. Only leaves keep
/// their gradient.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var<'_>) -> Option<Tensor> {
        self.grads.get_mut(var.id).and_then(Option::take)
    }
}
