//! Independent double-precision forward pass used as a numerical oracle.
//!
//! Everything here is written as straight-line loops over `Vec<f64>` — no
//! tensors, no tape, no shared kernels — so it can serve as a second opinion
//! on the production f32 path. Gradient checking runs finite differences
//! against this forward: perturbations and reductions happen entirely in f64,
//! which keeps the numeric side of the comparison far below the f32 path's
//! own rounding noise.
//!
//! The math mirrors the encoder exactly (pre-LN blocks, structural causal
//! mask, tanh-form gelu, pooled row at the end-of-text position), with every
//! constant taken from the f32 implementation so the two paths agree to f32
//! rounding error.

use crate::encoder::{Encoder, LN_EPS};
use crate::lora::{AdapterSet, ProjKind};
use crate::ops::{GELU_A, GELU_C};
use crate::tensor::Tensor;

fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

/// Double-precision copy of one low-rank adapter.
#[derive(Debug, Clone)]
pub struct RefAdapter {
    pub block: usize,
    pub kind: ProjKind,
    pub rank: usize,
    /// `[rank, d]` row-major.
    pub a: Vec<f64>,
    /// `[d, rank]` row-major.
    pub b: Vec<f64>,
    pub alpha: f64,
}

/// Double-precision copy of an adapter set.
#[derive(Debug, Clone)]
pub struct RefAdapterSet {
    pub adapters: Vec<RefAdapter>,
    pub multiplier: f64,
}

impl RefAdapterSet {
    pub fn from_set(set: &AdapterSet) -> Self {
        RefAdapterSet {
            adapters: set
                .adapters()
                .iter()
                .map(|ad| RefAdapter {
                    block: ad.layer.block,
                    kind: ad.layer.kind,
                    rank: ad.rank(),
                    a: to_f64(&ad.a),
                    b: to_f64(&ad.b),
                    alpha: ad.alpha as f64,
                })
                .collect(),
            multiplier: set.multiplier() as f64,
        }
    }

    fn find(&self, block: usize, kind: ProjKind) -> Option<&RefAdapter> {
        self.adapters.iter().find(|ad| ad.block == block && ad.kind == kind)
    }

    /// Flat view of every trainable scalar, in the same order as
    /// `AdapterSet::params` flattens them (A then B per adapter).
    pub fn flat_params_mut(&mut self) -> Vec<&mut f64> {
        self.adapters
            .iter_mut()
            .flat_map(|ad| ad.a.iter_mut().chain(ad.b.iter_mut()))
            .collect()
    }
}

struct RefBlock {
    norm1_gain: Vec<f64>,
    norm1_bias: Vec<f64>,
    attn: [(Vec<f64>, Vec<f64>); 4], // (weight [d,d], bias [d]) in q/k/v/out order
    norm2_gain: Vec<f64>,
    norm2_bias: Vec<f64>,
    w_in: Vec<f64>,
    b_in: Vec<f64>,
    w_out: Vec<f64>,
    b_out: Vec<f64>,
}

/// Double-precision copy of a frozen encoder.
pub struct RefEncoder {
    d: usize,
    d_mlp: usize,
    n_heads: usize,
    max_len: usize,
    causal: bool,
    token_embedding: Vec<f64>,
    position_embedding: Vec<f64>,
    blocks: Vec<RefBlock>,
    final_gain: Vec<f64>,
    final_bias: Vec<f64>,
}

fn layernorm64(x: &mut [f64], d: usize, gain: &[f64], bias: &[f64]) {
    let eps = LN_EPS as f64;
    for row in x.chunks_mut(d) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * inv * gain[j] + bias[j];
        }
    }
}

fn gelu64(x: f64) -> f64 {
    let c = GELU_C as f64;
    let a = GELU_A as f64;
    0.5 * x * (1.0 + (c * (x + a * x * x * x)).tanh())
}

/// `x·Wᵀ + bias` for row-major `x [n,d_in]`, `w [d_out,d_in]`.
fn affine64(x: &[f64], n: usize, d_in: usize, w: &[f64], bias: &[f64], d_out: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; n * d_out];
    for i in 0..n {
        for o in 0..d_out {
            let mut acc = 0.0;
            for c in 0..d_in {
                acc += x[i * d_in + c] * w[o * d_in + c];
            }
            out[i * d_out + o] = acc + bias[o];
        }
    }
    out
}

impl RefEncoder {
    pub fn from_encoder(enc: &Encoder) -> Self {
        let config = enc.config();
        RefEncoder {
            d: config.d_model,
            d_mlp: config.d_model * config.mlp_ratio,
            n_heads: config.n_heads,
            max_len: config.max_len,
            causal: config.causal,
            token_embedding: to_f64(&enc.token_embedding),
            position_embedding: to_f64(&enc.position_embedding),
            blocks: enc
                .blocks
                .iter()
                .map(|b| RefBlock {
                    norm1_gain: to_f64(&b.norm1.gain),
                    norm1_bias: to_f64(&b.norm1.bias),
                    attn: ProjKind::ALL
                        .map(|kind| (to_f64(b.attn.weight(kind)), to_f64(b.attn.bias(kind)))),
                    norm2_gain: to_f64(&b.norm2.gain),
                    norm2_bias: to_f64(&b.norm2.bias),
                    w_in: to_f64(&b.mlp.w_in),
                    b_in: to_f64(&b.mlp.b_in),
                    w_out: to_f64(&b.mlp.w_out),
                    b_out: to_f64(&b.mlp.b_out),
                })
                .collect(),
            final_gain: to_f64(&enc.final_norm.gain),
            final_bias: to_f64(&enc.final_norm.bias),
        }
    }

    fn project(
        &self,
        x: &[f64],
        w: &[f64],
        bias: &[f64],
        adapters: Option<&RefAdapterSet>,
        block: usize,
        kind: ProjKind,
    ) -> Vec<f64> {
        let (n, d) = (self.max_len, self.d);
        let mut out = affine64(x, n, d, w, bias, d);
        if let Some(set) = adapters {
            if let Some(ad) = set.find(block, kind) {
                let alpha = set.multiplier * ad.alpha;
                let r = ad.rank;
                for i in 0..n {
                    // low = x · Aᵀ, then out += alpha · (low · Bᵀ)
                    let mut low = vec![0.0f64; r];
                    for (l, lo) in low.iter_mut().enumerate() {
                        for c in 0..d {
                            *lo += x[i * d + c] * ad.a[l * d + c];
                        }
                    }
                    for o in 0..d {
                        let mut acc = 0.0;
                        for (l, lo) in low.iter().enumerate() {
                            acc += lo * ad.b[o * r + l];
                        }
                        out[i * d + o] += alpha * acc;
                    }
                }
            }
        }
        out
    }

    fn attention(&self, q: &[f64], k: &[f64], v: &[f64]) -> Vec<f64> {
        let (n, d, heads) = (self.max_len, self.d, self.n_heads);
        let hd = d / heads;
        let inv_sqrt = 1.0 / (hd as f64).sqrt();
        let mut out = vec![0.0f64; n * d];
        for h in 0..heads {
            let off = h * hd;
            for i in 0..n {
                let limit = if self.causal { i + 1 } else { n };
                let mut logits = vec![0.0f64; limit];
                let mut max = f64::NEG_INFINITY;
                for (j, logit) in logits.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for c in 0..hd {
                        acc += q[i * d + off + c] * k[j * d + off + c];
                    }
                    *logit = acc * inv_sqrt;
                    max = max.max(*logit);
                }
                let mut denom = 0.0;
                for logit in logits.iter_mut() {
                    *logit = (*logit - max).exp();
                    denom += *logit;
                }
                for c in 0..hd {
                    let mut acc = 0.0;
                    for (j, e) in logits.iter().enumerate() {
                        acc += e / denom * v[j * d + off + c];
                    }
                    out[i * d + off + c] = acc;
                }
            }
        }
        out
    }

    /// Full forward pass: returns `(tokenwise [max_len·d], pooled [d])`.
    pub fn forward(
        &self,
        ids: &[u32],
        eos_pos: usize,
        adapters: Option<&RefAdapterSet>,
    ) -> (Vec<f64>, Vec<f64>) {
        let (n, d) = (self.max_len, self.d);
        assert_eq!(ids.len(), n, "reference forward expects a padded sequence");
        let mut x = vec![0.0f64; n * d];
        for (i, &id) in ids.iter().enumerate() {
            for c in 0..d {
                x[i * d + c] =
                    self.token_embedding[id as usize * d + c] + self.position_embedding[i * d + c];
            }
        }
        for (bi, block) in self.blocks.iter().enumerate() {
            let mut h = x.clone();
            layernorm64(&mut h, d, &block.norm1_gain, &block.norm1_bias);
            let q = self.project(&h, &block.attn[0].0, &block.attn[0].1, adapters, bi, ProjKind::Q);
            let k = self.project(&h, &block.attn[1].0, &block.attn[1].1, adapters, bi, ProjKind::K);
            let v = self.project(&h, &block.attn[2].0, &block.attn[2].1, adapters, bi, ProjKind::V);
            let attn = self.attention(&q, &k, &v);
            let o = self.project(&attn, &block.attn[3].0, &block.attn[3].1, adapters, bi, ProjKind::Out);
            for (xv, ov) in x.iter_mut().zip(&o) {
                *xv += ov;
            }
            let mut h2 = x.clone();
            layernorm64(&mut h2, d, &block.norm2_gain, &block.norm2_bias);
            let mut hidden = affine64(&h2, n, d, &block.w_in, &block.b_in, self.d_mlp);
            for v in hidden.iter_mut() {
                *v = gelu64(*v);
            }
            let m = affine64(&hidden, n, self.d_mlp, &block.w_out, &block.b_out, d);
            for (xv, mv) in x.iter_mut().zip(&m) {
                *xv += mv;
            }
        }
        layernorm64(&mut x, d, &self.final_gain, &self.final_bias);
        let pooled = x[eos_pos * d..(eos_pos + 1) * d].to_vec();
        (x, pooled)
    }
}

/// Mean squared error over flat buffers, reduced in f64.
pub fn mse64(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let diff = x - y;
        acc += diff * diff;
    }
    acc / a.len() as f64
}
