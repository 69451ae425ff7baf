//! Differentiable tensor operations.
//!
//! Each op computes its output into a fresh buffer (inputs are never mutated)
//! and records itself on the supplied [`Tape`] when gradient can flow through
//! it. Summation order inside every kernel is fixed — plain sequential loops —
//! so identical inputs produce bit-identical outputs across runs.
//!
//! Backward rules live on [`Op`] and are validated against central finite
//! differences in the test suite and the [`crate::gradcheck`] harness.

use crate::error::{Error, Result};
use crate::tape::{GradMap, Node, Tape};
use crate::tensor::Tensor;

// ─── Raw kernels ────────────────────────────────────────────────────────────

/// `a [m,k] · b [k,n]`, inner loop over `k` in index order.
pub(crate) fn mm_nn(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0f32;
            for l in 0..k {
                acc += a[i * k + l] * b[l * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// `a [m,k] · bᵀ` where `b` is stored `[n,k]`.
fn mm_nt(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0f32;
            for l in 0..k {
                acc += a[i * k + l] * b[j * k + l];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// `aᵀ · b` where `a` is stored `[m,k]` and `b` is `[m,n]`; output `[k,n]`.
fn mm_tn(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; k * n];
    for i in 0..k {
        for j in 0..n {
            let mut acc = 0.0f32;
            for l in 0..m {
                acc += a[l * k + i] * b[l * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

fn transpose_raw(x: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; x.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = x[i * cols + j];
        }
    }
    out
}

pub(crate) const GELU_C: f32 = 0.797_884_56; // sqrt(2/pi)
pub(crate) const GELU_A: f32 = 0.044_715;

fn gelu_scalar(x: f32) -> f32 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad_scalar(x: f32) -> f32 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Last-dimension extent and slice count for ops that normalize per slice.
fn last_dim(shape: &[usize], op: &str) -> Result<(usize, usize)> {
    match shape.last() {
        Some(&d) if d > 0 => Ok((shape.iter().product::<usize>() / d, d)),
        _ => Err(Error::dimension(format!(
            "{op} requires a non-empty last dimension, got shape {shape:?}"
        ))),
    }
}

// ─── Recorded op kinds ──────────────────────────────────────────────────────

/// One recorded operation, carrying whatever forward state its backward rule
/// needs beyond the input/output tensors held by the node.
pub(crate) enum Op {
    Matmul,
    /// `broadcast` marks the `[n,d] + [d]` row-broadcast form.
    Add { broadcast: bool },
    Sub,
    Mul,
    Scale(f32),
    Gelu,
    SoftmaxLastDim,
    LayerNorm { mean: Vec<f32>, inv_std: Vec<f32> },
    ConcatLastDim,
    SliceRows { start: usize },
    GatherRows { ids: Vec<u32> },
    Transpose,
    Reshape,
    Mse,
    Sum,
    /// Multi-head attention with saved attention probabilities `[h·n·n]`
    /// (zeros at masked positions).
    Attention { n_heads: usize, causal: bool, probs: Vec<f32> },
}

// ─── Forward ops ────────────────────────────────────────────────────────────

/// Matrix product `a [m,k] · b [k,n] → [m,n]`.
pub fn matmul(tape: &Tape, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, ka) = a.dims2("matmul")?;
    let (kb, n) = b.dims2("matmul")?;
    if ka != kb {
        return Err(Error::dimension(format!(
            "matmul inner dimensions disagree: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let out = Tensor::from_vec(vec![m, n], mm_nn(a.data(), b.data(), m, ka, n))?;
    tape.record(Op::Matmul, &[a, b], &out);
    Ok(out)
}

/// Elementwise sum. Also accepts the row-broadcast form `[n,d] + [d]`
/// (bias addition), the only broadcast the encoder needs.
pub fn add(tape: &Tape, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() == b.shape() {
        let data: Vec<f32> = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::from_vec(a.shape().to_vec(), data)?;
        tape.record(Op::Add { broadcast: false }, &[a, b], &out);
        return Ok(out);
    }
    if let ([n, d], [bd]) = (a.shape(), b.shape()) {
        if d == bd {
            let mut data = Vec::with_capacity(n * d);
            for row in a.data().chunks_exact(*d) {
                for (x, y) in row.iter().zip(b.data()) {
                    data.push(x + y);
                }
            }
            let out = Tensor::from_vec(a.shape().to_vec(), data)?;
            tape.record(Op::Add { broadcast: true }, &[a, b], &out);
            return Ok(out);
        }
    }
    Err(Error::dimension(format!(
        "add requires equal shapes or [n,d]+[d], got {:?} + {:?}",
        a.shape(),
        b.shape()
    )))
}

/// Elementwise difference `a - b` (equal shapes).
pub fn sub(tape: &Tape, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::dimension(format!(
            "sub requires equal shapes, got {:?} - {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let data: Vec<f32> = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    let out = Tensor::from_vec(a.shape().to_vec(), data)?;
    tape.record(Op::Sub, &[a, b], &out);
    Ok(out)
}

/// Multiply every element by the scalar `s`.
pub fn scale(tape: &Tape, x: &Tensor, s: f32) -> Result<Tensor> {
    if !s.is_finite() {
        return Err(Error::contract(format!("scale factor must be finite, got {s}")));
    }
    let data: Vec<f32> = x.data().iter().map(|v| v * s).collect();
    let out = Tensor::from_vec(x.shape().to_vec(), data)?;
    tape.record(Op::Scale(s), &[x], &out);
    Ok(out)
}

/// Elementwise product (equal shapes).
pub fn mul(tape: &Tape, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::dimension(format!(
            "mul requires equal shapes, got {:?} * {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let data: Vec<f32> = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    let out = Tensor::from_vec(a.shape().to_vec(), data)?;
    tape.record(Op::Mul, &[a, b], &out);
    Ok(out)
}

/// Gaussian error linear unit (tanh form).
pub fn gelu(tape: &Tape, x: &Tensor) -> Tensor {
    let data: Vec<f32> = x.data().iter().map(|&v| gelu_scalar(v)).collect();
    let out = Tensor::from_vec(x.shape().to_vec(), data).expect("gelu preserves shape");
    tape.record(Op::Gelu, &[x], &out);
    out
}

/// Softmax over the last dimension with per-slice max subtraction, so constant
/// slices normalize to uniform rows and large logits cannot overflow.
pub fn softmax_lastdim(tape: &Tape, x: &Tensor) -> Result<Tensor> {
    let (slices, d) = last_dim(x.shape(), "softmax_lastdim")?;
    let mut data = vec![0.0f32; x.numel()];
    for s in 0..slices {
        let row = &x.data()[s * d..(s + 1) * d];
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut denom = 0.0f32;
        for (j, &v) in row.iter().enumerate() {
            let e = (v - max).exp();
            data[s * d + j] = e;
            denom += e;
        }
        for j in 0..d {
            data[s * d + j] /= denom;
        }
    }
    let out = Tensor::from_vec(x.shape().to_vec(), data)?;
    tape.record(Op::SoftmaxLastDim, &[x], &out);
    Ok(out)
}

/// Layer normalization over the last dimension: per-slice zero mean and unit
/// variance (population variance, `eps` inside the square root), then affine
/// `gain`/`bias` of length `d`.
pub fn layernorm(tape: &Tape, x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f32) -> Result<Tensor> {
    let (slices, d) = last_dim(x.shape(), "layernorm")?;
    if gain.shape() != [d] || bias.shape() != [d] {
        return Err(Error::dimension(format!(
            "layernorm affine shapes {:?}/{:?} do not match last dim {d} of {:?}",
            gain.shape(),
            bias.shape(),
            x.shape()
        )));
    }
    let mut data = vec![0.0f32; x.numel()];
    let mut means = vec![0.0f32; slices];
    let mut inv_stds = vec![0.0f32; slices];
    for s in 0..slices {
        let row = &x.data()[s * d..(s + 1) * d];
        let mut mean = 0.0f32;
        for &v in row {
            mean += v;
        }
        mean /= d as f32;
        let mut var = 0.0f32;
        for &v in row {
            let c = v - mean;
            var += c * c;
        }
        var /= d as f32;
        let inv_std = 1.0 / (var + eps).sqrt();
        means[s] = mean;
        inv_stds[s] = inv_std;
        for j in 0..d {
            let xhat = (row[j] - mean) * inv_std;
            data[s * d + j] = xhat * gain.data()[j] + bias.data()[j];
        }
    }
    let out = Tensor::from_vec(x.shape().to_vec(), data)?;
    tape.record(
        Op::LayerNorm { mean: means, inv_std: inv_stds },
        &[x, gain, bias],
        &out,
    );
    Ok(out)
}

/// Concatenate along the last dimension; leading dimensions must agree.
pub fn concat_lastdim(tape: &Tape, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ra, da) = last_dim(a.shape(), "concat_lastdim")?;
    let (rb, db) = last_dim(b.shape(), "concat_lastdim")?;
    if ra != rb || a.shape()[..a.shape().len() - 1] != b.shape()[..b.shape().len() - 1] {
        return Err(Error::dimension(format!(
            "concat_lastdim requires equal leading dims, got {:?} ++ {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut shape = a.shape().to_vec();
    *shape.last_mut().expect("non-empty shape") = da + db;
    let mut data = Vec::with_capacity(a.numel() + b.numel());
    for s in 0..ra {
        data.extend_from_slice(&a.data()[s * da..(s + 1) * da]);
        data.extend_from_slice(&b.data()[s * db..(s + 1) * db]);
    }
    let out = Tensor::from_vec(shape, data)?;
    tape.record(Op::ConcatLastDim, &[a, b], &out);
    Ok(out)
}

/// Rows `[start, start+len)` of a 2-d tensor.
pub fn slice_rows(tape: &Tape, x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let (rows, cols) = x.dims2("slice_rows")?;
    if start + len > rows || len == 0 {
        return Err(Error::dimension(format!(
            "slice_rows [{start}, {}) out of range for shape {:?}",
            start + len,
            x.shape()
        )));
    }
    let data = x.data()[start * cols..(start + len) * cols].to_vec();
    let out = Tensor::from_vec(vec![len, cols], data)?;
    tape.record(Op::SliceRows { start }, &[x], &out);
    Ok(out)
}

/// Embedding lookup: `out[i] = table[ids[i]]`. Backward scatter-adds, so
/// duplicate ids accumulate.
pub fn gather_rows(tape: &Tape, table: &Tensor, ids: &[u32]) -> Result<Tensor> {
    let (rows, cols) = table.dims2("gather_rows")?;
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= rows) {
        return Err(Error::dimension(format!(
            "gather_rows id {bad} out of range for table shape {:?}",
            table.shape()
        )));
    }
    let mut data = Vec::with_capacity(ids.len() * cols);
    for &id in ids {
        let r = id as usize;
        data.extend_from_slice(&table.data()[r * cols..(r + 1) * cols]);
    }
    let out = Tensor::from_vec(vec![ids.len(), cols], data)?;
    tape.record(Op::GatherRows { ids: ids.to_vec() }, &[table], &out);
    Ok(out)
}

/// Transpose of a 2-d tensor.
pub fn transpose(tape: &Tape, x: &Tensor) -> Result<Tensor> {
    let (rows, cols) = x.dims2("transpose")?;
    let out = Tensor::from_vec(vec![cols, rows], transpose_raw(x.data(), rows, cols))?;
    tape.record(Op::Transpose, &[x], &out);
    Ok(out)
}

/// Same data, new shape (element count must match).
pub fn reshape(tape: &Tape, x: &Tensor, shape: &[usize]) -> Result<Tensor> {
    if shape.iter().product::<usize>() != x.numel() {
        return Err(Error::dimension(format!(
            "reshape {:?} -> {:?} changes element count",
            x.shape(),
            shape
        )));
    }
    let out = Tensor::from_vec(shape.to_vec(), x.data().to_vec())?;
    tape.record(Op::Reshape, &[x], &out);
    Ok(out)
}

/// Mean squared error over all elements (scalar output).
pub fn mse(tape: &Tape, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::dimension(format!(
            "mse requires equal shapes, got {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let n = a.numel() as f32;
    let mut acc = 0.0f32;
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = x - y;
        acc += d * d;
    }
    let out = Tensor::scalar(acc / n);
    tape.record(Op::Mse, &[a, b], &out);
    Ok(out)
}

/// Sum of all elements (scalar output).
pub fn sum(tape: &Tape, x: &Tensor) -> Tensor {
    let mut acc = 0.0f32;
    for &v in x.data() {
        acc += v;
    }
    let out = Tensor::scalar(acc);
    tape.record(Op::Sum, &[x], &out);
    out
}

/// Multi-head attention composite: `softmax(q·kᵀ/√head_dim)·v` per head, with
/// an optional causal mask. The mask is structural — masked logits are never
/// materialized, so no ±∞ ever enters a buffer — and row `i` attends to
/// `j ≤ i` when `causal` is set.
pub fn multihead_attention(
    tape: &Tape,
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    n_heads: usize,
    causal: bool,
) -> Result<Tensor> {
    let (n, d) = q.dims2("multihead_attention")?;
    if k.shape() != q.shape() || v.shape() != q.shape() {
        return Err(Error::dimension(format!(
            "multihead_attention requires equal q/k/v shapes, got {:?}/{:?}/{:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    if n_heads == 0 || d % n_heads != 0 {
        return Err(Error::dimension(format!(
            "multihead_attention: {n_heads} heads do not divide model width {d}"
        )));
    }
    let hd = d / n_heads;
    let inv_sqrt = 1.0 / (hd as f32).sqrt();
    let mut out = vec![0.0f32; n * d];
    let mut probs = vec![0.0f32; n_heads * n * n];
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    for h in 0..n_heads {
        let off = h * hd;
        for i in 0..n {
            let limit = if causal { i + 1 } else { n };
            // Logits for the allowed positions, then stable softmax.
            let mut max = f32::NEG_INFINITY;
            let mut logits = vec![0.0f32; limit];
            for (j, logit) in logits.iter_mut().enumerate() {
                let mut acc = 0.0f32;
                for c in 0..hd {
                    acc += qd[i * d + off + c] * kd[j * d + off + c];
                }
                *logit = acc * inv_sqrt;
                max = max.max(*logit);
            }
            let mut denom = 0.0f32;
            for logit in logits.iter_mut() {
                *logit = (*logit - max).exp();
                denom += *logit;
            }
            let prow = &mut probs[(h * n + i) * n..(h * n + i) * n + limit];
            for (p, e) in prow.iter_mut().zip(&logits) {
                *p = e / denom;
            }
            for c in 0..hd {
                let mut acc = 0.0f32;
                for (j, p) in prow.iter().enumerate() {
                    acc += p * vd[j * d + off + c];
                }
                out[i * d + off + c] = acc;
            }
        }
    }
    let out = Tensor::from_vec(vec![n, d], out)?;
    tape.record(Op::Attention { n_heads, causal, probs }, &[q, k, v], &out);
    Ok(out)
}

// ─── Backward rules ─────────────────────────────────────────────────────────

impl Op {
    /// Accumulate input cotangents for one node given the output cotangent.
    /// Inputs whose `needs` flag is false are skipped (no gradient path).
    pub(crate) fn backward(&self, node: &Node, dout: &[f32], grads: &mut GradMap) {
        let inputs = &node.inputs;
        let needs = &node.needs;
        match self {
            Op::Matmul => {
                let (m, k) = (inputs[0].shape()[0], inputs[0].shape()[1]);
                let n = inputs[1].shape()[1];
                if needs[0] {
                    grads.accumulate(&inputs[0], &mm_nt(dout, inputs[1].data(), m, n, k));
                }
                if needs[1] {
                    grads.accumulate(&inputs[1], &mm_tn(inputs[0].data(), dout, m, k, n));
                }
            }
            Op::Add { broadcast } => {
                if needs[0] {
                    grads.accumulate(&inputs[0], dout);
                }
                if needs[1] {
                    if *broadcast {
                        let d = inputs[1].numel();
                        let mut db = vec![0.0f32; d];
                        for row in dout.chunks_exact(d) {
                            for (g, v) in db.iter_mut().zip(row) {
                                *g += v;
                            }
                        }
                        grads.accumulate(&inputs[1], &db);
                    } else {
                        grads.accumulate(&inputs[1], dout);
                    }
                }
            }
            Op::Sub => {
                if needs[0] {
                    grads.accumulate(&inputs[0], dout);
                }
                if needs[1] {
                    let neg: Vec<f32> = dout.iter().map(|v| -v).collect();
                    grads.accumulate(&inputs[1], &neg);
                }
            }
            Op::Mul => {
                if needs[0] {
                    let da: Vec<f32> = dout.iter().zip(inputs[1].data()).map(|(g, y)| g * y).collect();
                    grads.accumulate(&inputs[0], &da);
                }
                if needs[1] {
                    let db: Vec<f32> = dout.iter().zip(inputs[0].data()).map(|(g, x)| g * x).collect();
                    grads.accumulate(&inputs[1], &db);
                }
            }
            Op::Scale(s) => {
                if needs[0] {
                    let dx: Vec<f32> = dout.iter().map(|g| g * s).collect();
                    grads.accumulate(&inputs[0], &dx);
                }
            }
            Op::Gelu => {
                if needs[0] {
                    let dx: Vec<f32> = dout
                        .iter()
                        .zip(inputs[0].data())
                        .map(|(g, &x)| g * gelu_grad_scalar(x))
                        .collect();
                    grads.accumulate(&inputs[0], &dx);
                }
            }
            Op::SoftmaxLastDim => {
                if needs[0] {
                    let d = *node.output.shape().last().expect("non-empty shape");
                    let s = node.output.data();
                    let mut dx = vec![0.0f32; s.len()];
                    for slice in 0..s.len() / d {
                        let o = slice * d;
                        let mut dot = 0.0f32;
                        for j in 0..d {
                            dot += dout[o + j] * s[o + j];
                        }
                        for j in 0..d {
                            dx[o + j] = s[o + j] * (dout[o + j] - dot);
                        }
                    }
                    grads.accumulate(&inputs[0], &dx);
                }
            }
            Op::LayerNorm { mean, inv_std } => {
                let d = inputs[1].numel();
                let x = inputs[0].data();
                let g = inputs[1].data();
                let slices = x.len() / d;
                if needs[0] {
                    let mut dx = vec![0.0f32; x.len()];
                    for s in 0..slices {
                        let o = s * d;
                        let (mu, inv) = (mean[s], inv_std[s]);
                        let mut m1 = 0.0f32; // mean of dout*gain
                        let mut m2 = 0.0f32; // mean of dout*gain*xhat
                        for j in 0..d {
                            let xhat = (x[o + j] - mu) * inv;
                            let dxhat = dout[o + j] * g[j];
                            m1 += dxhat;
                            m2 += dxhat * xhat;
                        }
                        m1 /= d as f32;
                        m2 /= d as f32;
                        for j in 0..d {
                            let xhat = (x[o + j] - mu) * inv;
                            let dxhat = dout[o + j] * g[j];
                            dx[o + j] = (dxhat - m1 - xhat * m2) * inv;
                        }
                    }
                    grads.accumulate(&inputs[0], &dx);
                }
                if needs[1] {
                    let mut dg = vec![0.0f32; d];
                    for s in 0..slices {
                        let o = s * d;
                        for j in 0..d {
                            let xhat = (x[o + j] - mean[s]) * inv_std[s];
                            dg[j] += dout[o + j] * xhat;
                        }
                    }
                    grads.accumulate(&inputs[1], &dg);
                }
                if needs[2] {
                    let mut db = vec![0.0f32; d];
                    for s in 0..slices {
                        for j in 0..d {
                            db[j] += dout[s * d + j];
                        }
                    }
                    grads.accumulate(&inputs[2], &db);
                }
            }
            Op::ConcatLastDim => {
                let da = *inputs[0].shape().last().expect("non-empty shape");
                let db = *inputs[1].shape().last().expect("non-empty shape");
                let rows = inputs[0].numel() / da;
                if needs[0] {
                    let mut g = Vec::with_capacity(inputs[0].numel());
                    for s in 0..rows {
                        g.extend_from_slice(&dout[s * (da + db)..s * (da + db) + da]);
                    }
                    grads.accumulate(&inputs[0], &g);
                }
                if needs[1] {
                    let mut g = Vec::with_capacity(inputs[1].numel());
                    for s in 0..rows {
                        g.extend_from_slice(&dout[s * (da + db) + da..(s + 1) * (da + db)]);
                    }
                    grads.accumulate(&inputs[1], &g);
                }
            }
            Op::SliceRows { start } => {
                if needs[0] {
                    let cols = inputs[0].shape()[1];
                    let mut dx = vec![0.0f32; inputs[0].numel()];
                    dx[start * cols..start * cols + dout.len()].copy_from_slice(dout);
                    grads.accumulate(&inputs[0], &dx);
                }
            }
            Op::GatherRows { ids } => {
                if needs[0] {
                    let cols = inputs[0].shape()[1];
                    let mut dt = vec![0.0f32; inputs[0].numel()];
                    for (i, &id) in ids.iter().enumerate() {
                        let r = id as usize;
                        for c in 0..cols {
                            dt[r * cols + c] += dout[i * cols + c];
                        }
                    }
                    grads.accumulate(&inputs[0], &dt);
                }
            }
            Op::Transpose => {
                if needs[0] {
                    let (rows, cols) = (inputs[0].shape()[0], inputs[0].shape()[1]);
                    // dout has shape [cols, rows]; transpose it back.
                    grads.accumulate(&inputs[0], &transpose_raw(dout, cols, rows));
                }
            }
            Op::Reshape => {
                if needs[0] {
                    grads.accumulate(&inputs[0], dout);
                }
            }
            Op::Mse => {
                let n = inputs[0].numel() as f32;
                let scale = 2.0 * dout[0] / n;
                if needs[0] || needs[1] {
                    let da: Vec<f32> = inputs[0]
                        .data()
                        .iter()
                        .zip(inputs[1].data())
                        .map(|(x, y)| scale * (x - y))
                        .collect();
                    if needs[0] {
                        grads.accumulate(&inputs[0], &da);
                    }
                    if needs[1] {
                        let db: Vec<f32> = da.iter().map(|v| -v).collect();
                        grads.accumulate(&inputs[1], &db);
                    }
                }
            }
            Op::Sum => {
                if needs[0] {
                    grads.accumulate(&inputs[0], &vec![dout[0]; inputs[0].numel()]);
                }
            }
            Op::Attention { n_heads, causal, probs } => {
                let (n, d) = (inputs[0].shape()[0], inputs[0].shape()[1]);
                let hd = d / n_heads;
                let inv_sqrt = 1.0 / (hd as f32).sqrt();
                let (qd, kd, vd) = (inputs[0].data(), inputs[1].data(), inputs[2].data());
                let mut dq = vec![0.0f32; n * d];
                let mut dk = vec![0.0f32; n * d];
                let mut dv = vec![0.0f32; n * d];
                for h in 0..*n_heads {
                    let off = h * hd;
                    for i in 0..n {
                        let limit = if *causal { i + 1 } else { n };
                        let prow = &probs[(h * n + i) * n..(h * n + i) * n + limit];
                        // dprobs[j] = <dout_i, v_j>, then softmax VJP to dscores.
                        let mut dprobs = vec![0.0f32; limit];
                        for (j, dp) in dprobs.iter_mut().enumerate() {
                            let mut acc = 0.0f32;
                            for c in 0..hd {
                                acc += dout[i * d + off + c] * vd[j * d + off + c];
                            }
                            *dp = acc;
                        }
                        let mut dot = 0.0f32;
                        for j in 0..limit {
                            dot += dprobs[j] * prow[j];
                        }
                        for j in 0..limit {
                            let dscore = prow[j] * (dprobs[j] - dot) * inv_sqrt;
                            for c in 0..hd {
                                dq[i * d + off + c] += dscore * kd[j * d + off + c];
                                dk[j * d + off + c] += dscore * qd[i * d + off + c];
                            }
                        }
                        for (j, p) in prow.iter().enumerate() {
                            for c in 0..hd {
                                dv[j * d + off + c] += p * dout[i * d + off + c];
                            }
                        }
                    }
                }
                if needs[0] {
                    grads.accumulate(&inputs[0], &dq);
                }
                if needs[1] {
                    grads.accumulate(&inputs[1], &dk);
                }
                if needs[2] {
                    grads.accumulate(&inputs[2], &dv);
                }
            }
        }
    }
}
