//! Forward and backward numeric kernels.
//!
//! Every function is pure. Matrices are row-major; a tensor of rank > 2 is
//! treated as `[rows, last_dim]` wherever a kernel works per row. Large
//! kernels split work over output rows with rayon, and each row is reduced
//! sequentially, so results do not depend on the thread count.

use rayon::prelude::*;

use crate::error::KernelError;
use crate::tensor::Tensor;

/// Below this many multiply-adds a kernel stays on the calling thread.
const PAR_THRESHOLD: usize = 1 << 16;

/// Mean negative log-likelihood over the non-ignored targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub mean_nll: f64,
    pub token_count: usize,
}

fn as_matrix(t: &Tensor, what: &str) -> Result<(usize, usize), KernelError> {
    if t.rank() < 2 {
        return Err(KernelError::Shape(format!("{what} must be at least 2-d, got {:?}", t.shape())));
    }
    Ok((t.rows(), t.last_dim()))
}

fn finite(t: Tensor, op: &str) -> Result<Tensor, KernelError> {
    t.check_finite(op)?;
    Ok(t)
}

fn out_shape(a: &Tensor, last: usize) -> Vec<usize> {
    let mut shape = a.shape().to_vec();
    *shape.last_mut().unwrap() = last;
    shape
}

fn for_each_row(out: &mut [f64], width: usize, work: usize, f: impl Fn(usize, &mut [f64]) + Sync + Send) {
    if work >= PAR_THRESHOLD {
        out.par_chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
    } else {
        out.chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
    }
}

/// `a [.., m, k] · b [k, n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
    let (m, k) = as_matrix(a, "matmul lhs")?;
    if b.rank() != 2 || b.shape()[0] != k {
        return Err(KernelError::Shape(format!("matmul inner extents differ: {:?} x {:?}", a.shape(), b.shape())));
    }
    let n = b.shape()[1];
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for_each_row(&mut out, n, m * k * n, |i, row| {
        let arow = &ad[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    });
    finite(Tensor::from_parts(out_shape(a, n), out), "matmul")
}

/// `a [.., m, k] · bᵀ` where `b` is `[n, k]`.
pub fn matmul_bt(a: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
    let (m, k) = as_matrix(a, "matmul_bt lhs")?;
    if b.rank() != 2 || b.shape()[1] != k {
        return Err(KernelError::Shape(format!("matmul_bt inner extents differ: {:?} x {:?}ᵀ", a.shape(), b.shape())));
    }
    let n = b.shape()[0];
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for_each_row(&mut out, n, m * k * n, |i, row| {
        let arow = &ad[i * k..(i + 1) * k];
        for (j, o) in row.iter_mut().enumerate() {
            let brow = &bd[j * k..(j + 1) * k];
            *o = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    });
    finite(Tensor::from_parts(out_shape(a, n), out), "matmul_bt")
}

/// `aᵀ · c` for `a [m, k]`, `c [m, n]`, giving `[k, n]`.
pub fn matmul_at(a: &Tensor, c: &Tensor) -> Result<Tensor, KernelError> {
    let (m, k) = as_matrix(a, "matmul_at lhs")?;
    let (mc, n) = as_matrix(c, "matmul_at rhs")?;
    if m != mc {
        return Err(KernelError::Shape(format!("matmul_at row counts differ: {:?} vs {:?}", a.shape(), c.shape())));
    }
    let (ad, cd) = (a.data(), c.data());
    let mut out = vec![0.0; k * n];
    for_each_row(&mut out, n, m * k * n, |p, row| {
        for i in 0..m {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, &cv) in row.iter_mut().zip(&cd[i * n..(i + 1) * n]) {
                *o += av * cv;
            }
        }
    });
    finite(Tensor::from_parts(vec![k, n], out), "matmul_at")
}

/// Gradients of `C = A·B` given `dC`: `(dC·Bᵀ, Aᵀ·dC)`.
pub fn matmul_backward(a: &Tensor, b: &Tensor, dc: &Tensor) -> Result<(Tensor, Tensor), KernelError> {
    let da = matmul_bt(dc, b)?;
    let db = matmul_at(a, dc)?;
    Ok((da.reshape(a.shape())?, db))
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
    if a.shape() != b.shape() {
        return Err(KernelError::Shape(format!("add: {:?} vs {:?}", a.shape(), b.shape())));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    finite(Tensor::from_parts(a.shape().to_vec(), data), "add")
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
    if a.shape() != b.shape() {
        return Err(KernelError::Shape(format!("mul: {:?} vs {:?}", a.shape(), b.shape())));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    finite(Tensor::from_parts(a.shape().to_vec(), data), "mul")
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `z · sigmoid(z)`.
pub fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

pub fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

pub fn silu_tensor(x: &Tensor) -> Result<Tensor, KernelError> {
    let data = x.data().iter().map(|&z| silu(z)).collect();
    finite(Tensor::from_parts(x.shape().to_vec(), data), "silu")
}

/// Per-row `x / sqrt(mean(x²) + eps) ⊙ weight`. Also returns each row's
/// reciprocal RMS for the backward pass.
pub fn rmsnorm_forward(x: &Tensor, weight: &Tensor, eps: f64) -> Result<(Tensor, Vec<f64>), KernelError> {
    let d = x.last_dim();
    if weight.shape() != [d] {
        return Err(KernelError::Shape(format!("rmsnorm weight {:?} does not match last extent {d}", weight.shape())));
    }
    if eps <= 0.0 {
        return Err(KernelError::Shape(format!("rmsnorm eps must be positive, got {eps}")));
    }
    let w = weight.data();
    let mut out = vec![0.0; x.numel()];
    let mut inv = Vec::with_capacity(x.rows());
    for (row_in, row_out) in x.data().chunks(d).zip(out.chunks_mut(d)) {
        let ms = row_in.iter().map(|v| v * v).sum::<f64>() / d as f64;
        let r = 1.0 / (ms + eps).sqrt();
        for ((o, &v), &g) in row_out.iter_mut().zip(row_in).zip(w) {
            *o = v * r * g;
        }
        inv.push(r);
    }
    Ok((finite(Tensor::from_parts(x.shape().to_vec(), out), "rmsnorm")?, inv))
}

pub fn rmsnorm(x: &Tensor, weight: &Tensor, eps: f64) -> Result<Tensor, KernelError> {
    rmsnorm_forward(x, weight, eps).map(|(y, _)| y)
}

/// Returns `(dx, dweight)`.
pub fn rmsnorm_backward(
    x: &Tensor,
    weight: &Tensor,
    inv_rms: &[f64],
    dy: &Tensor,
) -> Result<(Tensor, Tensor), KernelError> {
    let d = x.last_dim();
    let w = weight.data();
    let mut dx = vec![0.0; x.numel()];
    let mut dw = vec![0.0; d];
    for (((row_x, row_dy), row_dx), &r) in
        x.data().chunks(d).zip(dy.data().chunks(d)).zip(dx.chunks_mut(d)).zip(inv_rms)
    {
        let mut dot = 0.0;
        for j in 0..d {
            dw[j] += row_dy[j] * row_x[j] * r;
            dot += row_dy[j] * w[j] * row_x[j];
        }
        let coef = r * r * r * dot / d as f64;
        for j in 0..d {
            row_dx[j] = r * row_dy[j] * w[j] - coef * row_x[j];
        }
    }
    Ok((
        finite(Tensor::from_parts(x.shape().to_vec(), dx), "rmsnorm backward")?,
        finite(Tensor::from_parts(vec![d], dw), "rmsnorm backward")?,
    ))
}

/// Gated feed-forward block `(silu(x·W1) ⊙ (x·W3))·W2`, no biases.
pub fn swiglu_ffn(x: &Tensor, w1: &Tensor, w3: &Tensor, w2: &Tensor) -> Result<Tensor, KernelError> {
    if w1.shape() != w3.shape() {
        return Err(KernelError::Shape(format!("W1 {:?} and W3 {:?} differ", w1.shape(), w3.shape())));
    }
    let gate = silu_tensor(&matmul(x, w1)?)?;
    let up = matmul(x, w3)?;
    matmul(&mul(&gate, &up)?, w2)
}

/// Row softmax probabilities of `[T, V]` logits plus the per-row log-sum-exp.
fn softmax_row(row: &[f64], out: &mut [f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    max + sum.ln()
}

/// Mean of `−log softmax(logits)[target]` over positions whose target is not
/// `ignore_index`.
pub fn cross_entropy(logits: &Tensor, targets: &[usize], ignore_index: usize) -> Result<LossValue, KernelError> {
    cross_entropy_forward(logits, targets, ignore_index).map(|(loss, _)| loss)
}

/// Loss plus the row softmax probabilities needed by the backward pass.
pub fn cross_entropy_forward(
    logits: &Tensor,
    targets: &[usize],
    ignore_index: usize,
) -> Result<(LossValue, Vec<f64>), KernelError> {
    let (t, v) = as_matrix(logits, "cross_entropy logits")?;
    if targets.len() != t {
        return Err(KernelError::Shape(format!("{} targets for {t} logit rows", targets.len())));
    }
    let mut probs = vec![0.0; t * v];
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, &target) in targets.iter().enumerate() {
        let row = logits.row(i);
        let lse = softmax_row(row, &mut probs[i * v..(i + 1) * v]);
        if target == ignore_index {
            continue;
        }
        if target >= v {
            return Err(KernelError::Index { index: target, bound: v });
        }
        total += lse - row[target];
        count += 1;
    }
    if count == 0 {
        return Err(KernelError::EmptyLoss);
    }
    let mean_nll = total / count as f64;
    if !mean_nll.is_finite() {
        return Err(KernelError::NonFinite("cross_entropy".into()));
    }
    Ok((LossValue { mean_nll, token_count: count }, probs))
}

/// `d mean_nll / d logits = (softmax − onehot) / token_count`, zero on ignored rows.
pub fn cross_entropy_backward(
    probs: &[f64],
    shape: &[usize],
    targets: &[usize],
    ignore_index: usize,
    token_count: usize,
) -> Tensor {
    let v = *shape.last().unwrap();
    let scale = 1.0 / token_count as f64;
    let mut grad = vec![0.0; probs.len()];
    for (i, &target) in targets.iter().enumerate() {
        if target == ignore_index {
            continue;
        }
        let row = &mut grad[i * v..(i + 1) * v];
        for (g, &p) in row.iter_mut().zip(&probs[i * v..(i + 1) * v]) {
            *g = p * scale;
        }
        row[target] -= scale;
    }
    Tensor::from_parts(shape.to_vec(), grad)
}

/// Rotates interleaved pairs `(x[2i], x[2i+1])` of each head vector by
/// `positions[t] · theta^(−2i/head_dim)`. `x` is `[T, H·head_dim]` or
/// `[T, H, head_dim]`. A negative `direction` applies the inverse rotation.
pub fn rope_rotate(
    x: &Tensor,
    positions: &[f64],
    theta: f64,
    head_dim: usize,
    direction: f64,
) -> Result<Tensor, KernelError> {
    if head_dim == 0 || !head_dim.is_multiple_of(2) {
        return Err(KernelError::Shape(format!("rope needs an even head_dim, got {head_dim}")));
    }
    let t = x.shape()[0];
    if positions.len() != t {
        return Err(KernelError::Shape(format!("{} positions for {t} rows", positions.len())));
    }
    let width = x.numel() / t;
    if !width.is_multiple_of(head_dim) {
        return Err(KernelError::Shape(format!("row width {width} is not a multiple of head_dim {head_dim}")));
    }
    let freqs: Vec<f64> = (0..head_dim / 2).map(|i| theta.powf(-2.0 * i as f64 / head_dim as f64)).collect();
    let mut out = x.data().to_vec();
    for (row, &m) in out.chunks_mut(width).zip(positions) {
        let rot: Vec<(f64, f64)> = freqs.iter().map(|f| (m * f).sin_cos()).collect();
        for head in row.chunks_mut(head_dim) {
            for (pair, &(sin, cos)) in head.chunks_mut(2).zip(&rot) {
                let sin = sin * direction;
                let (a, b) = (pair[0], pair[1]);
                pair[0] = a * cos - b * sin;
                pair[1] = a * sin + b * cos;
            }
        }
    }
    finite(Tensor::from_parts(x.shape().to_vec(), out), "rope")
}

/// Geometry of a grouped-query attention call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionShape {
    pub n_heads: usize,
    pub n_kv_groups: usize,
    pub head_dim: usize,
    pub causal: bool,
}

impl AttentionShape {
    fn group_of(&self, head: usize) -> usize {
        head / (self.n_heads / self.n_kv_groups)
    }

    fn validate(&self, q: &Tensor, k: &Tensor, v: &Tensor) -> Result<usize, KernelError> {
        if self.n_kv_groups == 0 || !self.n_heads.is_multiple_of(self.n_kv_groups) {
            return Err(KernelError::Shape(format!(
                "{} heads cannot be split into {} groups",
                self.n_heads, self.n_kv_groups
            )));
        }
        let t = q.shape()[0];
        let qw = self.n_heads * self.head_dim;
        let kw = self.n_kv_groups * self.head_dim;
        if q.numel() != t * qw || k.numel() != t * kw || v.numel() != t * kw {
            return Err(KernelError::Shape(format!(
                "attention q {:?}, k {:?}, v {:?} do not fit {} heads / {} groups of {}",
                q.shape(),
                k.shape(),
                v.shape(),
                self.n_heads,
                self.n_kv_groups,
                self.head_dim
            )));
        }
        Ok(t)
    }
}

/// Scaled dot-product attention where query head `h` reads key/value head
/// `h / (n_heads / n_kv_groups)`. Inputs are `[T, heads·head_dim]` row-major.
/// Returns the `[T, n_heads·head_dim]` output and the `[n_heads, T, T]`
/// attention probabilities.
pub fn attention_forward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    shape: AttentionShape,
) -> Result<(Tensor, Vec<f64>), KernelError> {
    let t = shape.validate(q, k, v)?;
    let hd = shape.head_dim;
    let qw = shape.n_heads * hd;
    let kw = shape.n_kv_groups * hd;
    let scale = 1.0 / (hd as f64).sqrt();
    let (qd, kd, vd) = (q.data(), k.data(), v.data());

    let per_head = |h: usize| -> (Vec<f64>, Vec<f64>) {
        let g = shape.group_of(h);
        let mut probs = vec![0.0; t * t];
        let mut out = vec![0.0; t * hd];
        for i in 0..t {
            let qi = &qd[i * qw + h * hd..i * qw + (h + 1) * hd];
            let limit = if shape.causal { i + 1 } else { t };
            let row = &mut probs[i * t..i * t + limit];
            let mut max = f64::NEG_INFINITY;
            for (j, s) in row.iter_mut().enumerate() {
                let kj = &kd[j * kw + g * hd..j * kw + (g + 1) * hd];
                *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                max = max.max(*s);
            }
            let mut sum = 0.0;
            for s in row.iter_mut() {
                *s = (*s - max).exp();
                sum += *s;
            }
            let oi = &mut out[i * hd..(i + 1) * hd];
            for (j, s) in row.iter_mut().enumerate() {
                *s /= sum;
                let vj = &vd[j * kw + g * hd..j * kw + (g + 1) * hd];
                for (o, &x) in oi.iter_mut().zip(vj) {
                    *o += *s * x;
                }
            }
        }
        (out, probs)
    };

    let heads: Vec<(Vec<f64>, Vec<f64>)> = if t * t * qw >= PAR_THRESHOLD {
        (0..shape.n_heads).into_par_iter().map(per_head).collect()
    } else {
        (0..shape.n_heads).map(per_head).collect()
    };

    let mut out = vec![0.0; t * qw];
    let mut probs = Vec::with_capacity(shape.n_heads * t * t);
    for (h, (head_out, head_probs)) in heads.into_iter().enumerate() {
        for i in 0..t {
            out[i * qw + h * hd..i * qw + (h + 1) * hd].copy_from_slice(&head_out[i * hd..(i + 1) * hd]);
        }
        probs.extend(head_probs);
    }
    Ok((finite(Tensor::from_parts(vec![t, qw], out), "attention")?, probs))
}

/// Returns `(dq, dk, dv)` for [`attention_forward`].
pub fn attention_backward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    probs: &[f64],
    d_out: &Tensor,
    shape: AttentionShape,
) -> Result<(Tensor, Tensor, Tensor), KernelError> {
    let t = shape.validate(q, k, v)?;
    let hd = shape.head_dim;
    let qw = shape.n_heads * hd;
    let kw = shape.n_kv_groups * hd;
    let scale = 1.0 / (hd as f64).sqrt();
    let (qd, kd, vd, dod) = (q.data(), k.data(), v.data(), d_out.data());

    // Per head: (dq_h [T·hd], dk_h [T·hd], dv_h [T·hd]).
    let per_head = |h: usize| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let g = shape.group_of(h);
        let p = &probs[h * t * t..(h + 1) * t * t];
        let mut dq = vec![0.0; t * hd];
        let mut dk = vec![0.0; t * hd];
        let mut dv = vec![0.0; t * hd];
        let mut dp = vec![0.0; t];
        for i in 0..t {
            let limit = if shape.causal { i + 1 } else { t };
            let doi = &dod[i * qw + h * hd..i * qw + (h + 1) * hd];
            let pi = &p[i * t..i * t + limit];
            let mut dot = 0.0;
            for j in 0..limit {
                let vj = &vd[j * kw + g * hd..j * kw + (g + 1) * hd];
                dp[j] = doi.iter().zip(vj).map(|(a, b)| a * b).sum();
                dot += dp[j] * pi[j];
                for (d, &o) in dv[j * hd..(j + 1) * hd].iter_mut().zip(doi) {
                    *d += pi[j] * o;
                }
            }
            let qi = &qd[i * qw + h * hd..i * qw + (h + 1) * hd];
            for j in 0..limit {
                let ds = pi[j] * (dp[j] - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                let kj = &kd[j * kw + g * hd..j * kw + (g + 1) * hd];
                for (d, &x) in dq[i * hd..(i + 1) * hd].iter_mut().zip(kj) {
                    *d += ds * x;
                }
                for (d, &x) in dk[j * hd..(j + 1) * hd].iter_mut().zip(qi) {
                    *d += ds * x;
                }
            }
        }
        (dq, dk, dv)
    };

    let heads: Vec<_> = if t * t * qw >= PAR_THRESHOLD {
        (0..shape.n_heads).into_par_iter().map(per_head).collect()
    } else {
        (0..shape.n_heads).map(per_head).collect()
    };

    let mut dq = vec![0.0; t * qw];
    let mut dk = vec![0.0; t * kw];
    let mut dv = vec![0.0; t * kw];
    for (h, (hq, hk, hv)) in heads.into_iter().enumerate() {
        let g = shape.group_of(h);
        for i in 0..t {
            dq[i * qw + h * hd..i * qw + (h + 1) * hd].copy_from_slice(&hq[i * hd..(i + 1) * hd]);
            for (d, s) in dk[i * kw + g * hd..i * kw + (g + 1) * hd].iter_mut().zip(&hk[i * hd..(i + 1) * hd]) {
                *d += s;
            }
            for (d, s) in dv[i * kw + g * hd..i * kw + (g + 1) * hd].iter_mut().zip(&hv[i * hd..(i + 1) * hd]) {
                *d += s;
            }
        }
    }
    Ok((
        finite(Tensor::from_parts(q.shape().to_vec(), dq), "attention backward")?,
        finite(Tensor::from_parts(k.shape().to_vec(), dk), "attention backward")?,
        finite(Tensor::from_parts(v.shape().to_vec(), dv), "attention backward")?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::randn([3, 4], 1.0, &mut rng);
        assert_eq!(matmul(&Tensor::identity(3), &x).unwrap(), x);

        let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let b = Tensor::from_rows(&[&[1.0], &[1.0]]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[3.0, 7.0]);

        let z = matmul(&Tensor::zeros([2, 3]), &x.reshape([3, 4]).unwrap()).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_rejects_mismatched_inner_extent() {
        let err = matmul(&Tensor::zeros([2, 3]), &Tensor::zeros([2, 3])).unwrap_err();
        assert!(matches!(err, KernelError::Shape(_)));
    }

    #[test]
    fn matmul_transposed_variants_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Tensor::randn([5, 3], 1.0, &mut rng);
        let b = Tensor::randn([4, 3], 1.0, &mut rng);
        let mut bt = Tensor::zeros([3, 4]);
        for i in 0..4 {
            for j in 0..3 {
                bt.data_mut()[j * 4 + i] = b.data()[i * 3 + j];
            }
        }
        assert!(matmul_bt(&a, &b).unwrap().max_abs_diff(&matmul(&a, &bt).unwrap()) < 1e-12);
    }

    #[test]
    fn rmsnorm_hand_values() {
        let ones = Tensor::ones([4]);
        let y = rmsnorm(&Tensor::ones([1, 4]), &ones, 1e-12).unwrap();
        assert!(y.data().iter().all(|&v| close(v, 1.0, 1e-9)));

        let y = rmsnorm(&Tensor::new([1, 2], vec![3.0, 4.0]).unwrap(), &Tensor::ones([2]), 1e-12).unwrap();
        assert!(close(y.data()[0], 0.8485, 1e-4));
        assert!(close(y.data()[1], 1.1314, 1e-4));

        let y = rmsnorm(&Tensor::zeros([2, 3]), &Tensor::ones([3]), 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn silu_hand_values() {
        assert_eq!(silu(0.0), 0.0);
        assert!(close(silu(1.0), 0.7311, 1e-4));
        assert!(close(silu(2.0), 1.7616, 1e-4));
        let one = Tensor::identity(1);
        let y = swiglu_ffn(&Tensor::ones([1, 1]), &one, &one, &one).unwrap();
        assert!(close(y.data()[0], 0.7311, 1e-4));
        let y = swiglu_ffn(&Tensor::zeros([2, 1]), &one, &one, &one).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cross_entropy_hand_values() {
        let uniform = Tensor::zeros([3, 4]);
        let l = cross_entropy(&uniform, &[0, 1, 3], usize::MAX).unwrap();
        assert!(close(l.mean_nll, 4f64.ln(), 1e-12));
        assert_eq!(l.token_count, 3);

        let certain = Tensor::new([1, 3], vec![0.0, 1e9, 0.0]).unwrap();
        assert!(cross_entropy(&certain, &[1], usize::MAX).unwrap().mean_nll < 1e-12);

        let two = Tensor::new([1, 2], vec![1.0, 0.0]).unwrap();
        assert!(close(cross_entropy(&two, &[0], usize::MAX).unwrap().mean_nll, 0.3133, 1e-4));
    }

    #[test]
    fn cross_entropy_errors() {
        let logits = Tensor::zeros([2, 3]);
        assert_eq!(cross_entropy(&logits, &[0, 3], 99).unwrap_err(), KernelError::Index { index: 3, bound: 3 });
        assert_eq!(cross_entropy(&logits, &[7, 7], 7).unwrap_err(), KernelError::EmptyLoss);
    }

    #[test]
    fn cross_entropy_ignores_masked_rows() {
        let logits = Tensor::new([2, 2], vec![1.0, 0.0, 5.0, -5.0]).unwrap();
        let masked = cross_entropy(&logits, &[0, 9], 9).unwrap();
        let single = cross_entropy(&Tensor::new([1, 2], vec![1.0, 0.0]).unwrap(), &[0], 9).unwrap();
        assert!(close(masked.mean_nll, single.mean_nll, 1e-15));
        assert_eq!(masked.token_count, 1);
    }

    #[test]
    fn rope_hand_value_and_inverse() {
        let x = Tensor::new([1, 2], vec![1.0, 0.0]).unwrap();
        let y = rope_rotate(&x, &[1.0], 10_000.0, 2, 1.0).unwrap();
        assert!(close(y.data()[0], 0.5403, 1e-4));
        assert!(close(y.data()[1], 0.8415, 1e-4));
        let back = rope_rotate(&y, &[1.0], 10_000.0, 2, -1.0).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-12);
        assert!(matches!(rope_rotate(&Tensor::zeros([1, 3]), &[0.0], 1e4, 3, 1.0), Err(KernelError::Shape(_))));
    }

    #[test]
    fn single_token_attention_returns_value() {
        let shape = AttentionShape { n_heads: 2, n_kv_groups: 1, head_dim: 2, causal: true };
        let q = Tensor::new([1, 4], vec![0.3, -1.0, 2.0, 0.5]).unwrap();
        let k = Tensor::new([1, 2], vec![1.0, 1.0]).unwrap();
        let v = Tensor::new([1, 2], vec![7.0, -3.0]).unwrap();
        let (out, _) = attention_forward(&q, &k, &v, shape).unwrap();
        assert_eq!(out.data(), &[7.0, -3.0, 7.0, -3.0]);
    }
}
