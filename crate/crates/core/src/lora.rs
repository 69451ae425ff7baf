//! Low-rank adapters over attention projections.
//!
//! Each adapter factors a weight update as `ΔW = B·A` with `A ∈ R^{r×k}`
//! (Gaussian-initialized) and `B ∈ R^{d×r}` (zero-initialized), so a freshly
//! created adapter is an exact identity. At apply time the adapted projection
//! computes `x·W₀ᵀ + α·((x·Aᵀ)·Bᵀ)` — the base weights are never touched, and
//! the effective strength `α` can be changed after training without retraining.
//!
//! An [`AdapterSet`] holds exactly one adapter per targeted projection (q, k,
//! v, and out of every attention block) plus one global multiplier. Sets can
//! be composed: the merged update per projection is `Σᵢ αᵢ·BᵢAᵢ`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::Tensor;

/// Standard deviation of the Gaussian initialization for `A`.
pub const INIT_STD: f32 = 0.02;

pub const DEFAULT_RANK: usize = 4;

/// Which projection inside an attention block an adapter attaches to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjKind {
    Q,
    K,
    V,
    Out,
}

impl ProjKind {
    pub const ALL: [ProjKind; 4] = [ProjKind::Q, ProjKind::K, ProjKind::V, ProjKind::Out];

    pub fn as_str(self) -> &'static str {
        match self {
            ProjKind::Q => "q",
            ProjKind::K => "k",
            ProjKind::V => "v",
            ProjKind::Out => "out",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "q" => Some(ProjKind::Q),
            "k" => Some(ProjKind::K),
            "v" => Some(ProjKind::V),
            "out" => Some(ProjKind::Out),
            _ => None,
        }
    }
}

/// Address of one adapted projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct LayerId {
    pub block: usize,
    pub kind: ProjKind,
}

#[derive(Debug, Clone)]
pub struct LoraAdapter {
    pub layer: LayerId,
    /// Down-projection `[rank, d_in]`.
    pub a: Tensor,
    /// Up-projection `[d_out, rank]`.
    pub b: Tensor,
    /// Per-adapter multiplier; 1.0 unless explicitly adjusted.
    pub alpha: f32,
}

impl LoraAdapter {
    pub fn new(layer: LayerId, a: Tensor, b: Tensor) -> Result<Self> {
        let (rank, d_in) = a.dims2("lora A")?;
        let (d_out, rank_b) = b.dims2("lora B")?;
        if rank != rank_b {
            return Err(Error::dimension(format!(
                "lora factors disagree on rank: A {:?} vs B {:?}",
                a.shape(),
                b.shape()
            )));
        }
        if rank == 0 || rank > d_in.min(d_out) {
            return Err(Error::contract(format!(
                "lora rank {rank} must lie in 1..=min(d_out={d_out}, d_in={d_in})"
            )));
        }
        Ok(LoraAdapter { layer, a, b, alpha: 1.0 })
    }

    pub fn rank(&self) -> usize {
        self.a.shape()[0]
    }

    /// True while `B` is still all zeros, i.e. the adapter is an exact
    /// identity regardless of strength.
    pub fn b_is_zero(&self) -> bool {
        self.b.data().iter().all(|&v| v == 0.0)
    }

    /// Dense update `alpha · (B·A)` as a flat `[d_out, d_in]` buffer. The
    /// product is formed first and scaled afterwards, so the delta is exactly
    /// proportional in `alpha` (bit-exact under power-of-two rescaling).
    pub fn dense_delta(&self, alpha: f32) -> Vec<f32> {
        let (rank, d_in) = (self.a.shape()[0], self.a.shape()[1]);
        let d_out = self.b.shape()[0];
        let mut delta = ops::mm_nn(self.b.data(), self.a.data(), d_out, rank, d_in);
        for v in delta.iter_mut() {
            *v *= alpha;
        }
        delta
    }
}

#[derive(Debug, Clone)]
pub struct AdapterSet {
    /// Sorted by `(block, kind)`; exactly one adapter per targeted projection.
    adapters: Vec<LoraAdapter>,
    multiplier: f32,
}

impl AdapterSet {
    /// Fresh adapters for every q/k/v/out projection of every block:
    /// `A ~ N(0, 0.02)` and `B = 0`, sampled in layer order from `seed`.
    pub fn init(config: &EncoderConfig, rank: usize, seed: u64) -> Result<Self> {
        if rank == 0 || rank > config.d_model {
            return Err(Error::contract(format!(
                "rank {rank} must lie in 1..=d_model ({})",
                config.d_model
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f32, INIT_STD).expect("constant std is valid");
        let d = config.d_model;
        let mut adapters = Vec::with_capacity(config.n_layers * ProjKind::ALL.len());
        for block in 0..config.n_layers {
            for kind in ProjKind::ALL {
                let a: Vec<f32> = (0..rank * d).map(|_| normal.sample(&mut rng)).collect();
                adapters.push(LoraAdapter::new(
                    LayerId { block, kind },
                    Tensor::param(vec![rank, d], a)?,
                    Tensor::param(vec![d, rank], vec![0.0; d * rank])?,
                )?);
            }
        }
        Ok(AdapterSet { adapters, multiplier: 1.0 })
    }

    /// Assemble a set from explicit adapters (artifact loading, tests).
    /// Rejects duplicate layers and enforces `(block, kind)` ordering.
    pub fn from_adapters(mut adapters: Vec<LoraAdapter>, multiplier: f32) -> Result<Self> {
        if !multiplier.is_finite() {
            return Err(Error::contract(format!(
                "adapter multiplier must be finite, got {multiplier}"
            )));
        }
        adapters.sort_by_key(|ad| ad.layer);
        for pair in adapters.windows(2) {
            if pair[0].layer == pair[1].layer {
                return Err(Error::contract(format!(
                    "duplicate adapter for block {} {}",
                    pair[0].layer.block,
                    pair[0].layer.kind.as_str()
                )));
            }
        }
        Ok(AdapterSet { adapters, multiplier })
    }

    pub fn adapters(&self) -> &[LoraAdapter] {
        &self.adapters
    }

    pub fn adapter_for(&self, block: usize, kind: ProjKind) -> Option<&LoraAdapter> {
        self.adapters
            .binary_search_by_key(&LayerId { block, kind }, |ad| ad.layer)
            .ok()
            .map(|i| &self.adapters[i])
    }

    pub fn multiplier(&self) -> f32 {
        self.multiplier
    }

    /// Set the global strength: every adapter's effective multiplier becomes
    /// `alpha`. Setting the same value twice is trivially idempotent.
    pub fn set_multiplier(&mut self, alpha: f32) -> Result<()> {
        if !alpha.is_finite() {
            return Err(Error::contract(format!(
                "slider multiplier must be finite, got {alpha}"
            )));
        }
        self.multiplier = alpha;
        Ok(())
    }

    /// Strength actually applied for one adapter.
    pub fn effective_alpha(&self, adapter: &LoraAdapter) -> f32 {
        self.multiplier * adapter.alpha
    }

    /// Largest rank across adapters (what an artifact records).
    pub fn rank(&self) -> usize {
        self.adapters.iter().map(LoraAdapter::rank).max().unwrap_or(0)
    }

    /// Trainable tensors in deterministic order: `(A, B)` per adapter, in
    /// `(block, kind)` order.
    pub fn params(&self) -> Vec<Tensor> {
        self.adapters
            .iter()
            .flat_map(|ad| [ad.a.clone(), ad.b.clone()])
            .collect()
    }

    /// Mutable slots in the same order as [`AdapterSet::params`], for the
    /// optimizer to swap updated tensors into.
    pub(crate) fn param_slots(&mut self) -> Vec<&mut Tensor> {
        self.adapters
            .iter_mut()
            .flat_map(|ad| [&mut ad.a, &mut ad.b])
            .collect()
    }

    /// Check every adapter against an encoder architecture.
    pub fn validate_for(&self, config: &EncoderConfig) -> Result<()> {
        let d = config.d_model;
        for ad in &self.adapters {
            if ad.layer.block >= config.n_layers {
                return Err(Error::config(format!(
                    "adapter targets block {} but the encoder has {} layers",
                    ad.layer.block, config.n_layers
                )));
            }
            if ad.a.shape()[1] != d || ad.b.shape()[0] != d {
                return Err(Error::config(format!(
                    "adapter for block {} {} has factor shapes {:?}/{:?}, expected [r,{d}]/[{d},r]",
                    ad.layer.block,
                    ad.layer.kind.as_str(),
                    ad.a.shape(),
                    ad.b.shape()
                )));
            }
        }
        Ok(())
    }

    /// Dense effective update per projection: `multiplier · adapter.alpha ·
    /// (B·A)` as a `[d_out, d_in]` tensor.
    pub fn merged_delta(&self, adapter: &LoraAdapter) -> Tensor {
        let (d_in, d_out) = (adapter.a.shape()[1], adapter.b.shape()[0]);
        let delta = adapter.dense_delta(self.effective_alpha(adapter));
        Tensor::from_vec(vec![d_out, d_in], delta).expect("delta shape is consistent")
    }
}

/// Merge slider sets into one: for each targeted projection the effective
/// update becomes `Σᵢ alphasᵢ·BᵢAᵢ` (per-adapter multipliers folded in; the
/// `alphas` arguments replace the sets' global multipliers). A singleton
/// composition returns a clone of the set at the requested strength, which is
/// exactly `set_multiplier`. With several sets, each projection's summed
/// update is stored densely as `B = ΣᵢαᵢBᵢAᵢ` against an identity `A`; term
/// addition is elementwise and pairwise, so swapping two sets (with their
/// alphas) yields bit-identical merged weights.
pub fn compose(sets: &[&AdapterSet], alphas: &[f32]) -> Result<AdapterSet> {
    if sets.is_empty() || sets.len() != alphas.len() {
        return Err(Error::contract(format!(
            "compose requires one alpha per set, got {} sets and {} alphas",
            sets.len(),
            alphas.len()
        )));
    }
    if let Some(bad) = alphas.iter().find(|a| !a.is_finite()) {
        return Err(Error::contract(format!(
            "compose multipliers must be finite, got {bad}"
        )));
    }
    if sets.len() == 1 {
        let mut merged = (*sets[0]).clone();
        merged.set_multiplier(alphas[0])?;
        return Ok(merged);
    }

    // Union of targeted projections, in (block, kind) order.
    let mut layers: Vec<LayerId> = sets
        .iter()
        .flat_map(|s| s.adapters.iter().map(|ad| ad.layer))
        .collect();
    layers.sort();
    layers.dedup();

    let mut merged = Vec::with_capacity(layers.len());
    for layer in layers {
        let mut total: Option<(usize, usize, Vec<f32>)> = None;
        for (set, &alpha) in sets.iter().zip(alphas) {
            let Some(ad) = set.adapter_for(layer.block, layer.kind) else {
                continue;
            };
            let (d_in, d_out) = (ad.a.shape()[1], ad.b.shape()[0]);
            let term = ad.dense_delta(alpha * ad.alpha);
            match &mut total {
                None => total = Some((d_out, d_in, term)),
                Some((o, i, acc)) => {
                    if (*o, *i) != (d_out, d_in) {
                        return Err(Error::config(format!(
                            "composed sets disagree on block {} {} shape: [{o},{i}] vs [{d_out},{d_in}]",
                            layer.block,
                            layer.kind.as_str()
                        )));
                    }
                    for (t, v) in acc.iter_mut().zip(&term) {
                        *t += v;
                    }
                }
            }
        }
        let (d_out, d_in, delta) = total.expect("layer came from the union");
        let mut identity = vec![0.0f32; d_in * d_in];
        for j in 0..d_in {
            identity[j * d_in + j] = 1.0;
        }
        merged.push(LoraAdapter::new(
            layer,
            Tensor::param(vec![d_in, d_in], identity)?,
            Tensor::param(vec![d_out, d_in], delta)?,
        )?);
    }
    AdapterSet::from_adapters(merged, 1.0)
}
