//! Slider training: contrastive target construction and the optimization loop.
//!
//! A slider is trained against a fixed target embedding built once from the
//! frozen encoder: the target concept's own embedding, shifted by the summed
//! positive-minus-negative prompt differences over every preserved concept
//!
//! ```text
//! target = enc(c_t) + Σ_{q∈Q} ( enc("c_+, q") − enc("c_−, q") )
//! ```
//!
//! applied independently to the tokenwise and pooled outputs of each encoder.
//! Training then minimizes the summed tokenwise + pooled MSE between the
//! adapted encoding of `c_t` and that target, updating only the low-rank
//! adapter factors with AdamW. With several encoders the per-encoder losses
//! are summed; their parameters are disjoint, so gradients are exactly what
//! each encoder would receive if trained alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::SliderArtifact;
use crate::encoder::{Encoder, EncodingOutput};
use crate::error::{Error, Result};
use crate::lora::AdapterSet;
use crate::ops;
use crate::optim::{AdamW, AdamWConfig};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::tokenizer::{join_prompt, TokenSeq, Vocab};

/// How the preserved-concept sum enters the target: `Sum` applies the
/// formula verbatim; `Mean` divides the summed directions by |Q| so the
/// target's magnitude does not grow with the number of preserved concepts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QMode {
    #[default]
    Sum,
    Mean,
}

impl std::str::FromStr for QMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(QMode::Sum),
            "mean" => Ok(QMode::Mean),
            other => Err(Error::config(format!("q_mode must be \"sum\" or \"mean\", got {other:?}"))),
        }
    }
}

/// The three prompts defining a slider plus the preserved-concept groups.
/// `preserved` mirrors the JSON file format: a list of groups, each a list of
/// concept strings; training flattens the groups into one list Q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub target: String,
    pub positive: String,
    pub negative: String,
    #[serde(default)]
    pub preserved: Vec<Vec<String>>,
    /// Optional file-level default; the CLI copies it into `TrainConfig`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_mode: Option<QMode>,
}

impl PromptSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, text) in
            [("target", &self.target), ("positive", &self.positive), ("negative", &self.negative)]
        {
            if text.trim().is_empty() {
                return Err(Error::contract(format!("prompt spec field {name} must be non-empty")));
            }
        }
        if self.preserved.iter().flatten().any(|q| q.trim().is_empty()) {
            return Err(Error::contract(
                "preserved groups must not contain empty concept strings".to_string(),
            ));
        }
        Ok(())
    }

    /// Flatten the preserved groups into one ordered list Q.
    pub fn flatten_q(&self) -> Vec<&str> {
        self.preserved.iter().flatten().map(String::as_str).collect()
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: PromptSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
    pub seed: u64,
    pub q_mode: QMode,
    pub tokenwise_weight: f32,
    pub pooled_weight: f32,
    pub rank: usize,
    /// When set, each epoch's trainee prompt is sampled uniformly from the
    /// target prompt and its preserved-concept extensions "c_t, q", each with
    /// its own shifted target. Off by default: every epoch trains on `c_t`.
    pub augment: bool,
    /// When set, the tokenwise loss covers only positions up to the trainee
    /// prompt's end-of-text token instead of every padded position.
    pub mask_pad: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            seed: 0,
            q_mode: QMode::Sum,
            tokenwise_weight: 1.0,
            pooled_weight: 1.0,
            rank: crate::lora::DEFAULT_RANK,
            augment: false,
            mask_pad: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1".to_string()));
        }
        if self.rank == 0 {
            return Err(Error::config("rank must be at least 1".to_string()));
        }
        for (name, w) in
            [("tokenwise_weight", self.tokenwise_weight), ("pooled_weight", self.pooled_weight)]
        {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::config(format!("{name} must be non-negative, got {w}")));
            }
        }
        self.adamw().validate()
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// Fixed tokenwise + pooled regression targets for one encoder.
#[derive(Debug, Clone)]
pub struct EncoderTarget {
    /// `[max_len, d_model]`
    pub tokenwise: Tensor,
    /// `[d_model]`
    pub pooled: Tensor,
}

/// Derive the adapter-init seed for one encoder of a run. Mixing the encoder
/// index through SplitMix64 keeps per-encoder streams decorrelated while the
/// whole run stays a pure function of the config seed.
pub fn adapter_seed(seed: u64, encoder_index: usize) -> u64 {
    let mut z = seed.wrapping_add((encoder_index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Build one encoder's target embedding with the base (adapter-free) encoder:
/// `enc(c_t) + Σ_q (enc("c_+, q") − enc("c_−, q"))`, the sum divided by |Q|
/// under `QMode::Mean`. The direction sum is accumulated over Q in group
/// order before being added to the base embedding.
pub fn build_target(
    encoder: &Encoder,
    vocab: &Vocab,
    spec: &PromptSpec,
    q_mode: QMode,
) -> Result<EncoderTarget> {
    spec.validate()?;
    let tape = Tape::inert();
    let max_len = encoder.config().max_len;
    let encode = |text: &str| -> Result<EncodingOutput> {
        encoder.encode(&tape, &vocab.encode(text, max_len)?, None)
    };

    let base = encode(&spec.target)?;
    let qs = spec.flatten_q();
    if qs.is_empty() {
        return Ok(EncoderTarget { tokenwise: base.tokenwise, pooled: base.pooled });
    }

    let mut sum_tok: Option<Tensor> = None;
    let mut sum_pool: Option<Tensor> = None;
    for q in &qs {
        let plus = encode(&join_prompt(&[spec.positive.as_str(), q])?)?;
        let minus = encode(&join_prompt(&[spec.negative.as_str(), q])?)?;
        let d_tok = ops::sub(&tape, &plus.tokenwise, &minus.tokenwise)?;
        let d_pool = ops::sub(&tape, &plus.pooled, &minus.pooled)?;
        sum_tok = Some(match sum_tok {
            None => d_tok,
            Some(acc) => ops::add(&tape, &acc, &d_tok)?,
        });
        sum_pool = Some(match sum_pool {
            None => d_pool,
            Some(acc) => ops::add(&tape, &acc, &d_pool)?,
        });
    }
    let (mut sum_tok, mut sum_pool) = (sum_tok.expect("Q non-empty"), sum_pool.expect("Q non-empty"));
    if q_mode == QMode::Mean {
        let inv = 1.0 / qs.len() as f32;
        sum_tok = ops::scale(&tape, &sum_tok, inv)?;
        sum_pool = ops::scale(&tape, &sum_pool, inv)?;
    }
    Ok(EncoderTarget {
        tokenwise: ops::add(&tape, &base.tokenwise, &sum_tok)?,
        pooled: ops::add(&tape, &base.pooled, &sum_pool)?,
    })
}

/// Summed regression loss across encoders:
/// `Σ_e tokenwise_weight·MSE(tokenwise_e) + pooled_weight·MSE(pooled_e)`.
/// With `mask_pad`, the tokenwise term covers rows `0..=eos_pos` only.
pub fn loss(
    tape: &Tape,
    outputs: &[EncodingOutput],
    targets: &[EncoderTarget],
    config: &TrainConfig,
) -> Result<Tensor> {
    if outputs.is_empty() || outputs.len() != targets.len() {
        return Err(Error::contract(format!(
            "loss needs one target per encoder output, got {} outputs and {} targets",
            outputs.len(),
            targets.len()
        )));
    }
    let mut total: Option<Tensor> = None;
    for (out, target) in outputs.iter().zip(targets) {
        let (got_tok, want_tok) = if config.mask_pad {
            let rows = out.eos_pos + 1;
            (
                ops::slice_rows(tape, &out.tokenwise, 0, rows)?,
                ops::slice_rows(tape, &target.tokenwise, 0, rows)?,
            )
        } else {
            (out.tokenwise.clone(), target.tokenwise.clone())
        };
        let l_tok = ops::scale(tape, &ops::mse(tape, &got_tok, &want_tok)?, config.tokenwise_weight)?;
        let l_pool = ops::scale(tape, &ops::mse(tape, &out.pooled, &target.pooled)?, config.pooled_weight)?;
        let term = ops::add(tape, &l_tok, &l_pool)?;
        total = Some(match total {
            None => term,
            Some(acc) => ops::add(tape, &acc, &term)?,
        });
    }
    Ok(total.expect("outputs non-empty"))
}

/// One training run: fixed targets, per-encoder adapter sets, optimizer
/// state, and the epoch loop. Owns everything mutable; the encoders stay
/// shared and frozen.
pub struct Trainer<'a> {
    encoders: &'a [Encoder],
    config: TrainConfig,
    /// Trainee prompts: index 0 is `c_t`; under augmentation the extensions
    /// "c_t, q" follow in Q order.
    candidates: Vec<TokenSeq>,
    /// `candidate_targets[y][e]` is encoder `e`'s target for trainee `y`.
    candidate_targets: Vec<Vec<EncoderTarget>>,
    sets: Vec<AdapterSet>,
    opt: AdamW,
    rng: ChaCha8Rng,
}

impl<'a> Trainer<'a> {
    pub fn new(
        encoders: &'a [Encoder],
        vocab: &Vocab,
        spec: &PromptSpec,
        config: TrainConfig,
    ) -> Result<Self> {
        if encoders.is_empty() {
            return Err(Error::contract("training requires at least one encoder".to_string()));
        }
        spec.validate()?;
        config.validate()?;

        // Per-candidate targets: the direction sum is the same for every
        // trainee prompt, so target(y) = enc(y) + direction.
        let mut candidate_prompts = vec![spec.target.clone()];
        if config.augment {
            for q in spec.flatten_q() {
                candidate_prompts.push(join_prompt(&[spec.target.as_str(), q])?);
            }
        }
        let mut candidates = Vec::with_capacity(candidate_prompts.len());
        let mut candidate_targets: Vec<Vec<EncoderTarget>> =
            vec![Vec::with_capacity(encoders.len()); candidate_prompts.len()];
        for (yi, prompt) in candidate_prompts.iter().enumerate() {
            for encoder in encoders {
                let shifted = build_target(
                    encoder,
                    vocab,
                    &PromptSpec { target: prompt.clone(), ..spec.clone() },
                    config.q_mode,
                )?;
                candidate_targets[yi].push(shifted);
            }
            // All candidates share the first encoder's max_len tokenization
            // only if widths agree; sequences are per-encoder otherwise.
            candidates.push(vocab.encode(prompt, encoders[0].config().max_len)?);
        }
        // Encoders may disagree on max_len; candidate sequences are stored per
        // encoder in that case. Keep the common case simple: require equal
        // max_len across encoders (dual-encoder setups differ in width only).
        if encoders.iter().any(|e| e.config().max_len != encoders[0].config().max_len) {
            return Err(Error::config(
                "joint training requires all encoders to share max_len".to_string(),
            ));
        }

        let sets = encoders
            .iter()
            .enumerate()
            .map(|(i, enc)| AdapterSet::init(enc.config(), config.rank, adapter_seed(config.seed, i)))
            .collect::<Result<Vec<_>>>()?;
        let param_sizes: Vec<usize> =
            sets.iter().flat_map(|s| s.params().iter().map(Tensor::numel).collect::<Vec<_>>()).collect();
        let opt = AdamW::new(config.adamw(), &param_sizes)?;
        let rng = ChaCha8Rng::seed_from_u64(adapter_seed(config.seed, encoders.len()));
        Ok(Trainer { encoders, config, candidates, candidate_targets, sets, opt, rng })
    }

    /// Replace the freshly initialized adapter sets (used by tests that need
    /// identical adapters across separate runs). Optimizer state is rebuilt.
    pub fn with_adapter_sets(mut self, sets: Vec<AdapterSet>) -> Result<Self> {
        if sets.len() != self.encoders.len() {
            return Err(Error::contract(format!(
                "expected {} adapter sets, got {}",
                self.encoders.len(),
                sets.len()
            )));
        }
        for (set, enc) in sets.iter().zip(self.encoders) {
            set.validate_for(enc.config())?;
        }
        let param_sizes: Vec<usize> =
            sets.iter().flat_map(|s| s.params().iter().map(Tensor::numel).collect::<Vec<_>>()).collect();
        self.opt = AdamW::new(self.config.adamw(), &param_sizes)?;
        self.sets = sets;
        Ok(self)
    }

    pub fn adapter_sets(&self) -> &[AdapterSet] {
        &self.sets
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn targets(&self) -> &[EncoderTarget] {
        &self.candidate_targets[0]
    }

    /// One forward/backward on trainee prompt `c_t` at the current adapter
    /// state, without stepping: returns the loss and per-parameter gradients
    /// in [`AdapterSet::params`] order across sets.
    pub fn loss_and_grads(&self) -> Result<(f32, Vec<Vec<f32>>)> {
        let (value, grads) = self.forward_backward(0)?;
        Ok((value, grads))
    }

    fn forward_backward(&self, candidate: usize) -> Result<(f32, Vec<Vec<f32>>)> {
        let tape = Tape::new();
        let seq = &self.candidates[candidate];
        let mut outputs = Vec::with_capacity(self.encoders.len());
        for (encoder, set) in self.encoders.iter().zip(&self.sets) {
            outputs.push(encoder.encode(&tape, seq, Some(set))?);
        }
        let l = loss(&tape, &outputs, &self.candidate_targets[candidate], &self.config)?;
        let value = l.item()?;
        tape.backward(&l)?;
        let grads = self
            .sets
            .iter()
            .flat_map(|s| s.params())
            .map(|p| {
                p.grad().ok_or_else(|| {
                    Error::contract("adapter parameter missing its gradient after backward".to_string())
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((value, grads))
    }

    /// One epoch: forward, backward, optimizer step. `epoch` is 1-based and
    /// only used for diagnostics.
    pub fn step(&mut self, epoch: usize) -> Result<f32> {
        let candidate = if self.config.augment && self.candidates.len() > 1 {
            self.rng.gen_range(0..self.candidates.len())
        } else {
            0
        };
        let (value, grads) = self.forward_backward(candidate)?;
        if !value.is_finite() {
            return Err(Error::Numerical(format!(
                "loss became non-finite ({value}) at epoch {epoch}"
            )));
        }
        let mut slots: Vec<&mut Tensor> =
            self.sets.iter_mut().flat_map(AdapterSet::param_slots).collect();
        self.opt.step(&mut slots, &grads)?;
        Ok(value)
    }

    /// Run the full epoch loop, returning the loss history (one entry per
    /// epoch, measured before that epoch's update).
    pub fn run(&mut self) -> Result<Vec<f32>> {
        let mut history = Vec::with_capacity(self.config.epochs);
        for epoch in 1..=self.config.epochs {
            history.push(self.step(epoch)?);
        }
        Ok(history)
    }

    pub fn into_adapter_sets(self) -> Vec<AdapterSet> {
        self.sets
    }
}

/// Train a slider end to end and package it as an artifact.
pub fn train_slider(
    encoders: &[Encoder],
    vocab: &Vocab,
    spec: &PromptSpec,
    config: &TrainConfig,
) -> Result<(SliderArtifact, Vec<f32>)> {
    let mut trainer = Trainer::new(encoders, vocab, spec, config.clone())?;
    let history = trainer.run()?;
    let artifact =
        SliderArtifact::from_training(encoders, spec, config, trainer.into_adapter_sets())?;
    Ok((artifact, history))
}
