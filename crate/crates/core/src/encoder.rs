//! CLIP-style causal text encoder.
//!
//! A stack of pre-layernorm transformer blocks over token + position
//! embeddings, closed by a final layernorm. The pooled embedding is the
//! tokenwise row at the sequence's end-of-text position. All base weights are
//! frozen (they never require gradients); the only trainable state lives in
//! low-rank adapters threaded through the q/k/v/out projections.
//!
//! Construction is deterministic: the same config (including its seed) always
//! produces bit-identical weights, and the config's SHA-256 fingerprint is
//! what artifacts use to detect encoder mismatches.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lora::{AdapterSet, LoraAdapter, ProjKind};
use crate::ops;
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::tokenizer::TokenSeq;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Epsilon inside the layernorm square root.
pub const LN_EPS: f32 = 1e-5;

/// Standard deviation of the Gaussian weight initialization.
pub const WEIGHT_INIT_STD: f32 = 0.02;

fn default_max_len() -> usize {
    crate::tokenizer::DEFAULT_MAX_LEN
}

fn default_mlp_ratio() -> usize {
    4
}

fn default_causal() -> bool {
    true
}

/// Architecture + init seed. Two encoders are interchangeable exactly when
/// their configs (and therefore fingerprints) are equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    #[serde(default = "default_mlp_ratio")]
    pub mlp_ratio: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_causal")]
    pub causal: bool,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < crate::tokenizer::RESERVED as usize {
            return Err(Error::config(format!(
                "vocab_size {} cannot hold the {} reserved tokens",
                self.vocab_size,
                crate::tokenizer::RESERVED
            )));
        }
        if self.max_len < 2 {
            return Err(Error::config(format!(
                "max_len {} leaves no room for <bos> and <eos>",
                self.max_len
            )));
        }
        if self.d_model == 0 || self.n_heads == 0 || self.n_layers == 0 || self.mlp_ratio == 0 {
            return Err(Error::config(
                "d_model, n_heads, n_layers and mlp_ratio must all be at least 1".to_string(),
            ));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form; artifacts store this to refuse
    /// application against a different encoder.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            use std::fmt::Write;
            write!(hex, "{byte:02x}").expect("writing to a String cannot fail");
        }
        hex
    }

    fn d_mlp(&self) -> usize {
        self.d_model * self.mlp_ratio
    }
}

#[derive(Debug, Clone)]
pub struct NormWeights {
    pub gain: Tensor,
    pub bias: Tensor,
}

impl NormWeights {
    fn identity(d: usize) -> Self {
        NormWeights {
            gain: Tensor::from_vec(vec![d], vec![1.0; d]).expect("shape matches data"),
            bias: Tensor::zeros(vec![d]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttnWeights {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
}

impl AttnWeights {
    pub fn weight(&self, kind: ProjKind) -> &Tensor {
        match kind {
            ProjKind::Q => &self.wq,
            ProjKind::K => &self.wk,
            ProjKind::V => &self.wv,
            ProjKind::Out => &self.wo,
        }
    }

    pub fn bias(&self, kind: ProjKind) -> &Tensor {
        match kind {
            ProjKind::Q => &self.bq,
            ProjKind::K => &self.bk,
            ProjKind::V => &self.bv,
            ProjKind::Out => &self.bo,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpWeights {
    pub w_in: Tensor,
    pub b_in: Tensor,
    pub w_out: Tensor,
    pub b_out: Tensor,
}

#[derive(Debug, Clone)]
pub struct BlockWeights {
    pub norm1: NormWeights,
    pub attn: AttnWeights,
    pub norm2: NormWeights,
    pub mlp: MlpWeights,
}

/// Frozen encoder weights plus the config they were built from.
#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    fingerprint: String,
    /// `[vocab_size, d_model]`
    pub token_embedding: Tensor,
    /// `[max_len, d_model]`
    pub position_embedding: Tensor,
    pub blocks: Vec<BlockWeights>,
    pub final_norm: NormWeights,
}

/// Tokenwise and pooled embeddings for one sequence.
#[derive(Debug, Clone)]
pub struct EncodingOutput {
    /// `[max_len, d_model]`
    pub tokenwise: Tensor,
    /// `[d_model]` — the tokenwise row at `eos_pos`.
    pub pooled: Tensor,
    pub eos_pos: usize,
}

impl Encoder {
    /// Deterministically initialize from a config: every weight matrix and
    /// both embedding tables are `N(0, 0.02)` draws from a ChaCha stream
    /// seeded by `config.seed`; biases start at zero and layernorms at
    /// identity. Base weights are frozen — none require gradients.
    pub fn init(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0f32, WEIGHT_INIT_STD).expect("constant std is valid");
        let mut gaussian = |shape: Vec<usize>| -> Tensor {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = (0..n).map(|_| normal.sample(&mut rng)).collect();
            Tensor::from_vec(shape, data).expect("shape matches data")
        };

        let d = config.d_model;
        let token_embedding = gaussian(vec![config.vocab_size, d]);
        let position_embedding = gaussian(vec![config.max_len, d]);
        let blocks = (0..config.n_layers)
            .map(|_| BlockWeights {
                norm1: NormWeights::identity(d),
                attn: AttnWeights {
                    wq: gaussian(vec![d, d]),
                    bq: Tensor::zeros(vec![d]),
                    wk: gaussian(vec![d, d]),
                    bk: Tensor::zeros(vec![d]),
                    wv: gaussian(vec![d, d]),
                    bv: Tensor::zeros(vec![d]),
                    wo: gaussian(vec![d, d]),
                    bo: Tensor::zeros(vec![d]),
                },
                norm2: NormWeights::identity(d),
                mlp: MlpWeights {
                    w_in: gaussian(vec![config.d_mlp(), d]),
                    b_in: Tensor::zeros(vec![config.d_mlp()]),
                    w_out: gaussian(vec![d, config.d_mlp()]),
                    b_out: Tensor::zeros(vec![d]),
                },
            })
            .collect();
        let fingerprint = config.fingerprint();
        Ok(Encoder {
            config,
            fingerprint,
            token_embedding,
            position_embedding,
            blocks,
            final_norm: NormWeights::identity(d),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Total scalar count across embeddings, blocks, and the final norm.
    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Every tensor with a stable name, in serialization order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![
            ("token_embedding".to_string(), self.token_embedding.clone()),
            ("position_embedding".to_string(), self.position_embedding.clone()),
        ];
        for (i, block) in self.blocks.iter().enumerate() {
            let p = format!("blocks.{i}");
            out.push((format!("{p}.norm1.gain"), block.norm1.gain.clone()));
            out.push((format!("{p}.norm1.bias"), block.norm1.bias.clone()));
            for kind in ProjKind::ALL {
                out.push((format!("{p}.attn.{}.weight", kind.as_str()), block.attn.weight(kind).clone()));
                out.push((format!("{p}.attn.{}.bias", kind.as_str()), block.attn.bias(kind).clone()));
            }
            out.push((format!("{p}.norm2.gain"), block.norm2.gain.clone()));
            out.push((format!("{p}.norm2.bias"), block.norm2.bias.clone()));
            out.push((format!("{p}.mlp.w_in"), block.mlp.w_in.clone()));
            out.push((format!("{p}.mlp.b_in"), block.mlp.b_in.clone()));
            out.push((format!("{p}.mlp.w_out"), block.mlp.w_out.clone()));
            out.push((format!("{p}.mlp.b_out"), block.mlp.b_out.clone()));
        }
        out.push(("final_norm.gain".to_string(), self.final_norm.gain.clone()));
        out.push(("final_norm.bias".to_string(), self.final_norm.bias.clone()));
        out
    }

    /// Rebuild an encoder from named tensors (the inverse of
    /// [`Encoder::named_tensors`]), validating every shape.
    pub fn from_named_tensors(
        config: EncoderConfig,
        mut tensors: std::collections::BTreeMap<String, Tensor>,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let mut take = |name: &str, shape: &[usize]| -> Result<Tensor> {
            let t = tensors
                .remove(name)
                .ok_or_else(|| Error::format(format!("encoder tensor {name} is missing")))?;
            if t.shape() != shape {
                return Err(Error::format(format!(
                    "encoder tensor {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            Ok(t)
        };

        let token_embedding = take("token_embedding", &[config.vocab_size, d])?;
        let position_embedding = take("position_embedding", &[config.max_len, d])?;
        let mut blocks = Vec::with_capacity(config.n_layers);
        for i in 0..config.n_layers {
            let p = format!("blocks.{i}");
            blocks.push(BlockWeights {
                norm1: NormWeights {
                    gain: take(&format!("{p}.norm1.gain"), &[d])?,
                    bias: take(&format!("{p}.norm1.bias"), &[d])?,
                },
                attn: AttnWeights {
                    wq: take(&format!("{p}.attn.q.weight"), &[d, d])?,
                    bq: take(&format!("{p}.attn.q.bias"), &[d])?,
                    wk: take(&format!("{p}.attn.k.weight"), &[d, d])?,
                    bk: take(&format!("{p}.attn.k.bias"), &[d])?,
                    wv: take(&format!("{p}.attn.v.weight"), &[d, d])?,
                    bv: take(&format!("{p}.attn.v.bias"), &[d])?,
                    wo: take(&format!("{p}.attn.out.weight"), &[d, d])?,
                    bo: take(&format!("{p}.attn.out.bias"), &[d])?,
                },
                norm2: NormWeights {
                    gain: take(&format!("{p}.norm2.gain"), &[d])?,
                    bias: take(&format!("{p}.norm2.bias"), &[d])?,
                },
                mlp: MlpWeights {
                    w_in: take(&format!("{p}.mlp.w_in"), &[config.d_mlp(), d])?,
                    b_in: take(&format!("{p}.mlp.b_in"), &[config.d_mlp()])?,
                    w_out: take(&format!("{p}.mlp.w_out"), &[d, config.d_mlp()])?,
                    b_out: take(&format!("{p}.mlp.b_out"), &[d])?,
                },
            });
        }
        let final_norm = NormWeights {
            gain: take("final_norm.gain", &[d])?,
            bias: take("final_norm.bias", &[d])?,
        };
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::format(format!(
                "encoder container holds unexpected tensor {extra}"
            )));
        }
        let fingerprint = config.fingerprint();
        Ok(Encoder {
            config,
            fingerprint,
            token_embedding,
            position_embedding,
            blocks,
            final_norm,
        })
    }

    /// One projection `x·Wᵀ + b`, plus the low-rank branch
    /// `α·((x·Aᵀ)·Bᵀ)` when an adapter targets it. The branch is skipped only
    /// when it provably contributes zero (`α = 0` or `B` still all-zero) and
    /// nothing is being recorded — during training it always stays on the
    /// tape so `A` and `B` receive gradients even while `B = 0`.
    fn project(
        &self,
        tape: &Tape,
        x: &Tensor,
        w: &Tensor,
        b: &Tensor,
        adapter: Option<(&LoraAdapter, f32)>,
    ) -> Result<Tensor> {
        let wt = ops::transpose(tape, w)?;
        let mut out = ops::add(tape, &ops::matmul(tape, x, &wt)?, b)?;
        if let Some((ad, alpha)) = adapter {
            let inert = alpha == 0.0 || ad.b_is_zero();
            if tape.is_recording() || !inert {
                let at = ops::transpose(tape, &ad.a)?;
                let bt = ops::transpose(tape, &ad.b)?;
                let low = ops::matmul(tape, x, &at)?;
                let update = ops::matmul(tape, &low, &bt)?;
                out = ops::add(tape, &out, &ops::scale(tape, &update, alpha)?)?;
            }
        }
        Ok(out)
    }

    /// Encode one tokenized sequence. `adapters` threads low-rank updates
    /// into the attention projections; pass `None` for the frozen base model.
    pub fn encode(
        &self,
        tape: &Tape,
        seq: &TokenSeq,
        adapters: Option<&AdapterSet>,
    ) -> Result<EncodingOutput> {
        if seq.max_len() != self.config.max_len {
            return Err(Error::dimension(format!(
                "sequence is padded to {} tokens but the encoder expects {}",
                seq.max_len(),
                self.config.max_len
            )));
        }
        if let Some(set) = adapters {
            set.validate_for(&self.config)?;
        }
        let lookup = |block: usize, kind: ProjKind| -> Option<(&LoraAdapter, f32)> {
            let set = adapters?;
            let ad = set.adapter_for(block, kind)?;
            Some((ad, set.effective_alpha(ad)))
        };

        let tok = ops::gather_rows(tape, &self.token_embedding, seq.ids())?;
        let mut x = ops::add(tape, &tok, &self.position_embedding)?;
        for (bi, block) in self.blocks.iter().enumerate() {
            let h = ops::layernorm(tape, &x, &block.norm1.gain, &block.norm1.bias, LN_EPS)?;
            let q = self.project(tape, &h, &block.attn.wq, &block.attn.bq, lookup(bi, ProjKind::Q))?;
            let k = self.project(tape, &h, &block.attn.wk, &block.attn.bk, lookup(bi, ProjKind::K))?;
            let v = self.project(tape, &h, &block.attn.wv, &block.attn.bv, lookup(bi, ProjKind::V))?;
            let attn = ops::multihead_attention(tape, &q, &k, &v, self.config.n_heads, self.config.causal)?;
            let o = self.project(tape, &attn, &block.attn.wo, &block.attn.bo, lookup(bi, ProjKind::Out))?;
            x = ops::add(tape, &x, &o)?;

            let h2 = ops::layernorm(tape, &x, &block.norm2.gain, &block.norm2.bias, LN_EPS)?;
            let wt_in = ops::transpose(tape, &block.mlp.w_in)?;
            let hidden = ops::gelu(tape, &ops::add(tape, &ops::matmul(tape, &h2, &wt_in)?, &block.mlp.b_in)?);
            let wt_out = ops::transpose(tape, &block.mlp.w_out)?;
            let m = ops::add(tape, &ops::matmul(tape, &hidden, &wt_out)?, &block.mlp.b_out)?;
            x = ops::add(tape, &x, &m)?;
        }
        let tokenwise = ops::layernorm(tape, &x, &self.final_norm.gain, &self.final_norm.bias, LN_EPS)?;
        let pooled = ops::reshape(
            tape,
            &ops::slice_rows(tape, &tokenwise, seq.eos_pos(), 1)?,
            &[self.config.d_model],
        )?;
        Ok(EncodingOutput { tokenwise, pooled, eos_pos: seq.eos_pos() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::Vocab;

    fn toy_config() -> EncoderConfig {
        EncoderConfig {
            vocab_size: 32,
            max_len: 8,
            d_model: 16,
            n_heads: 4,
            n_layers: 2,
            mlp_ratio: 4,
            seed: 5,
            causal: true,
        }
    }

    fn toy_vocab() -> Vocab {
        Vocab::new(&["old", "young", "person", "smiling", "hair"]).unwrap()
    }

    #[test]
    fn param_count_matches_closed_form() {
        let config = EncoderConfig {
            vocab_size: 256,
            max_len: 16,
            d_model: 32,
            n_heads: 4,
            n_layers: 2,
            mlp_ratio: 4,
            seed: 0,
            causal: true,
        };
        let enc = Encoder::init(config.clone()).unwrap();
        let d = config.d_model;
        let per_block = 2 * (2 * d)                   // two norms
            + 4 * (d * d + d)                          // q/k/v/out
            + (4 * d * d + 4 * d) + (4 * d * d + d);   // mlp in + out
        let expected = (config.vocab_size + config.max_len) * d
            + config.n_layers * per_block
            + 2 * d;
        assert_eq!(expected, 34_176);
        assert_eq!(enc.param_count(), expected);
    }

    #[test]
    fn same_seed_is_bit_identical_and_different_seed_is_not() {
        let a = Encoder::init(toy_config()).unwrap();
        let b = Encoder::init(toy_config()).unwrap();
        assert_eq!(a.token_embedding.data(), b.token_embedding.data());
        assert_eq!(
            a.blocks[1].mlp.w_out.data(),
            b.blocks[1].mlp.w_out.data()
        );
        let mut other = toy_config();
        other.seed = 6;
        let c = Encoder::init(other).unwrap();
        assert_ne!(a.token_embedding.data(), c.token_embedding.data());
    }

    #[test]
    fn base_weights_are_frozen() {
        let enc = Encoder::init(toy_config()).unwrap();
        for (name, t) in enc.named_tensors() {
            assert!(!t.requires_grad(), "{name} should be frozen");
        }
    }

    #[test]
    fn encode_is_deterministic_and_pools_the_eos_row() {
        let enc = Encoder::init(toy_config()).unwrap();
        let seq = toy_vocab().encode("old person smiling", 8).unwrap();
        let tape = Tape::inert();
        let out1 = enc.encode(&tape, &seq, None).unwrap();
        let out2 = enc.encode(&tape, &seq, None).unwrap();
        assert_eq!(out1.tokenwise.data(), out2.tokenwise.data());
        assert_eq!(out1.tokenwise.shape(), &[8, 16]);
        assert_eq!(out1.pooled.shape(), &[16]);
        let d = 16;
        let row = &out1.tokenwise.data()[seq.eos_pos() * d..(seq.eos_pos() + 1) * d];
        assert_eq!(out1.pooled.data(), row);
        assert!(out1.pooled.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn causal_encoder_ignores_future_tokens() {
        let enc = Encoder::init(toy_config()).unwrap();
        let vocab = toy_vocab();
        // Same prefix, different final word: rows strictly before the point
        // of divergence must be bit-identical under the causal mask.
        let s1 = vocab.encode("old person smiling", 8).unwrap();
        let s2 = vocab.encode("old person hair", 8).unwrap();
        assert_eq!(s1.ids()[..3], s2.ids()[..3]);
        let tape = Tape::inert();
        let o1 = enc.encode(&tape, &s1, None).unwrap();
        let o2 = enc.encode(&tape, &s2, None).unwrap();
        let d = 16;
        for pos in 0..3 {
            assert_eq!(
                o1.tokenwise.data()[pos * d..(pos + 1) * d],
                o2.tokenwise.data()[pos * d..(pos + 1) * d],
                "position {pos} depends on a future token"
            );
        }
        // ...and the eos rows must differ, since the content diverged.
        assert_ne!(o1.pooled.data(), o2.pooled.data());
    }

    #[test]
    fn fresh_adapters_and_zero_strength_are_exact_identities() {
        let enc = Encoder::init(toy_config()).unwrap();
        let seq = toy_vocab().encode("young person", 8).unwrap();
        let tape = Tape::inert();
        let base = enc.encode(&tape, &seq, None).unwrap();

        // B = 0: identity at any strength.
        let mut fresh = AdapterSet::init(enc.config(), 4, 123).unwrap();
        fresh.set_multiplier(0.7).unwrap();
        let adapted = enc.encode(&tape, &seq, Some(&fresh)).unwrap();
        assert_eq!(base.tokenwise.data(), adapted.tokenwise.data());
        assert_eq!(base.pooled.data(), adapted.pooled.data());

        // Nonzero B but multiplier 0: still identity.
        let mut trained = AdapterSet::init(enc.config(), 4, 123).unwrap();
        for slot in trained.param_slots() {
            let shape = slot.shape().to_vec();
            let n = slot.numel();
            *slot = Tensor::param(shape, (0..n).map(|i| (i as f32).sin() * 0.05).collect()).unwrap();
        }
        trained.set_multiplier(0.0).unwrap();
        let gated = enc.encode(&tape, &seq, Some(&trained)).unwrap();
        assert_eq!(base.tokenwise.data(), gated.tokenwise.data());

        // Sanity: at nonzero strength the same set actually changes outputs.
        trained.set_multiplier(0.5).unwrap();
        let active = enc.encode(&tape, &seq, Some(&trained)).unwrap();
        assert_ne!(base.tokenwise.data(), active.tokenwise.data());
    }

    #[test]
    fn frozen_forward_records_nothing_but_adapter_forward_does() {
        let enc = Encoder::init(toy_config()).unwrap();
        let seq = toy_vocab().encode("old person", 8).unwrap();
        let tape = Tape::new();
        enc.encode(&tape, &seq, None).unwrap();
        assert!(tape.is_empty(), "frozen forward must stay off the tape");

        let set = AdapterSet::init(enc.config(), 4, 0).unwrap();
        enc.encode(&tape, &seq, Some(&set)).unwrap();
        assert!(!tape.is_empty(), "adapter forward must be recorded");
        tape.reset();
    }

    #[test]
    fn sequence_length_mismatch_is_rejected() {
        let enc = Encoder::init(toy_config()).unwrap();
        let seq = toy_vocab().encode("old person", 4).unwrap();
        let err = enc.encode(&Tape::inert(), &seq, None).unwrap_err();
        assert!(err.to_string().contains("padded to 4"), "got: {err}");
    }

    #[test]
    fn config_validation_names_the_problem() {
        let mut config = toy_config();
        config.n_heads = 5;
        let err = Encoder::init(config).unwrap_err();
        assert!(err.to_string().contains("not divisible"), "got: {err}");

        let mut config = toy_config();
        config.max_len = 1;
        assert!(Encoder::init(config).is_err());
    }

    #[test]
    fn fingerprint_tracks_config_identity() {
        let a = toy_config();
        let mut b = toy_config();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
        b.seed = 999;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn named_tensors_round_trip() {
        let enc = Encoder::init(toy_config()).unwrap();
        let map: std::collections::BTreeMap<String, Tensor> =
            enc.named_tensors().into_iter().collect();
        let again = Encoder::from_named_tensors(toy_config(), map).unwrap();
        assert_eq!(enc.param_count(), again.param_count());
        assert_eq!(
            enc.blocks[0].attn.wq.data(),
            again.blocks[0].attn.wq.data()
        );
        // A missing tensor is reported by name.
        let mut partial: std::collections::BTreeMap<String, Tensor> =
            enc.named_tensors().into_iter().collect();
        partial.remove("blocks.1.mlp.w_in");
        let err = Encoder::from_named_tensors(toy_config(), partial).unwrap_err();
        assert!(err.to_string().contains("blocks.1.mlp.w_in"), "got: {err}");
    }
}
