//! Finite-difference validation of the backward pass.
//!
//! The training loop lives or dies on its analytic gradients, so this module
//! checks every adapter gradient of the full training objective against
//! central differences taken over the straight-line `f64` forward in
//! [`crate::reference`]. Using an independent double-precision twin keeps
//! the finite-difference noise floor far below the pass threshold; differencing
//! the `f32` forward itself would drown real defects in rounding error.
//!
//! The harness builds its own small fixture (a six-word vocabulary and a
//! contrastive prompt spec) on top of a caller-supplied encoder shape, seeds
//! the adapters with non-degenerate content, and compares gradients one
//! parameter at a time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::reference::{mse64, RefAdapterSet, RefEncoder};
use crate::tensor::Tensor;
use crate::tokenizer::{Vocab, RESERVED};
use crate::trainer::{PromptSpec, TrainConfig, Trainer};

/// A gradient check passes when the worst relative error stays below this.
pub const TOLERANCE: f64 = 1e-3;

/// Central-difference step size.
const FD_STEP: f64 = 1e-3;

/// Floor on the relative-error denominator. The analytic gradients come off
/// an `f32` tape, which carries an absolute noise floor of roughly 1e-7 on
/// this objective; gradients much smaller than typical (~1e-2 here) are
/// dominated by that noise, so they are judged on absolute difference
/// instead — the floor turns [`TOLERANCE`] into an absolute bound of
/// `TOLERANCE * REL_FLOOR` = 1e-6 for near-zero entries, far above honest
/// rounding noise yet far below any real backward-pass defect.
const REL_FLOOR: f64 = 1e-3;

/// Words of the built-in fixture vocabulary.
const FIXTURE_WORDS: [&str; 6] = ["w0", "w1", "w2", "w3", "w4", "w5"];

/// How a gradient check should run.
#[derive(Debug, Clone, Copy)]
pub struct GradcheckOptions {
    /// Seeds the encoder weights and the adapter content.
    pub seed: u64,
    /// Deliberately corrupt one analytic gradient before comparing; the
    /// check must then fail. Used as a negative control for the harness.
    pub corrupt_grad: bool,
}

/// Outcome of one gradient check.
#[derive(Debug, Clone)]
pub struct GradcheckReport {
    /// Worst relative error over all checked parameters.
    pub max_rel_error: f64,
    /// Name of the parameter with the worst error, e.g.
    /// `blocks.1.attn.v.lora_a[37]`.
    pub worst_param: String,
    pub params_checked: usize,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

fn fixture_spec() -> PromptSpec {
    PromptSpec {
        target: "w0 w1".to_string(),
        positive: "w0 w1, w2".to_string(),
        negative: "w0 w1, w3".to_string(),
        preserved: vec![vec!["w4".to_string(), "w5".to_string()]],
        q_mode: None,
    }
}

/// Check every adapter gradient of the training objective on a fixture built
/// from `config`, with all randomness derived from `options.seed`.
pub fn run(config: &EncoderConfig, options: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut config = config.clone();
    config.seed = options.seed;
    if (config.vocab_size as u32) < RESERVED + FIXTURE_WORDS.len() as u32 {
        return Err(Error::config(format!(
            "gradcheck fixture needs vocab_size >= {}, got {}",
            RESERVED as usize + FIXTURE_WORDS.len(),
            config.vocab_size
        )));
    }

    let encoder = crate::encoder::Encoder::init(config)?;
    let encoders = [encoder];
    let vocab = Vocab::new(&FIXTURE_WORDS)?;
    let spec = fixture_spec();
    let train_config = TrainConfig { seed: options.seed, ..TrainConfig::default() };
    let trainer = Trainer::new(&encoders, &vocab, &spec, train_config)?;

    // Fresh adapters have B = 0, which leaves the A gradients structurally
    // zero; inject non-degenerate content so every parameter carries signal.
    let mut set = trainer.adapter_sets()[0].clone();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(0x5EED));
    let normal = Normal::new(0.0f32, 0.15).expect("valid stddev");
    for slot in set.param_slots() {
        let shape = slot.shape().to_vec();
        let n = slot.numel();
        *slot = Tensor::param(shape, (0..n).map(|_| normal.sample(&mut rng)).collect())?;
    }

    // Flat parameter names in the same order as the flattened gradients:
    // per adapter (sorted by block then projection), the A factor then B.
    let mut names: Vec<(String, usize)> = Vec::new();
    for adapter in set.adapters() {
        let prefix =
            format!("blocks.{}.attn.{}", adapter.layer.block, adapter.layer.kind.as_str());
        names.push((format!("{prefix}.lora_a"), adapter.a.numel()));
        names.push((format!("{prefix}.lora_b"), adapter.b.numel()));
    }
    let name_of = |flat: usize| -> String {
        let mut offset = flat;
        for (name, len) in &names {
            if offset < *len {
                return format!("{name}[{offset}]");
            }
            offset -= len;
        }
        unreachable!("flat index {flat} beyond parameter count")
    };

    let trainer = trainer.with_adapter_sets(vec![set.clone()])?;
    let (_, grads) = trainer.loss_and_grads()?;
    let mut flat_analytic: Vec<f32> = grads.into_iter().flatten().collect();
    if options.corrupt_grad {
        flat_analytic[0] = flat_analytic[0] * 2.0 + 0.25;
    }

    // f64 twin of the objective the trainer differentiates.
    let reference = RefEncoder::from_encoder(&encoders[0]);
    let seq = vocab.encode(&spec.target, encoders[0].config().max_len)?;
    let target = &trainer.targets()[0];
    let t_tok: Vec<f64> = target.tokenwise.data().iter().map(|&v| v as f64).collect();
    let t_pool: Vec<f64> = target.pooled.data().iter().map(|&v| v as f64).collect();
    let w_tok = trainer.config().tokenwise_weight as f64;
    let w_pool = trainer.config().pooled_weight as f64;
    let objective = |s: &RefAdapterSet| -> f64 {
        let (tok, pool) = reference.forward(seq.ids(), seq.eos_pos(), Some(s));
        w_tok * mse64(&tok, &t_tok) + w_pool * mse64(&pool, &t_pool)
    };

    let mut ref_set = RefAdapterSet::from_set(&set);
    let n_params = ref_set.flat_params_mut().len();
    if n_params != flat_analytic.len() {
        return Err(Error::contract(format!(
            "reference exposes {n_params} parameters but the trainer produced {} gradients",
            flat_analytic.len()
        )));
    }

    let mut max_rel = 0.0f64;
    let mut worst = 0usize;
    for i in 0..n_params {
        let orig = *ref_set.flat_params_mut()[i];
        *ref_set.flat_params_mut()[i] = orig + FD_STEP;
        let up = objective(&ref_set);
        *ref_set.flat_params_mut()[i] = orig - FD_STEP;
        let down = objective(&ref_set);
        *ref_set.flat_params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let analytic = flat_analytic[i] as f64;
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > max_rel {
            max_rel = rel;
            worst = i;
        }
    }

    Ok(GradcheckReport {
        max_rel_error: max_rel,
        worst_param: name_of(worst),
        params_checked: n_params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config() -> EncoderConfig {
        EncoderConfig {
            vocab_size: 32,
            max_len: 8,
            d_model: 16,
            n_heads: 4,
            n_layers: 2,
            mlp_ratio: 4,
            seed: 0,
            causal: true,
        }
    }

    #[test]
    fn healthy_gradients_pass() {
        let report =
            run(&toy_config(), &GradcheckOptions { seed: 0, corrupt_grad: false }).unwrap();
        assert!(report.passed(), "max rel error {} at {}", report.max_rel_error, report.worst_param);
        // 2 blocks x 4 projections x (A: 4x16 + B: 16x4) parameters.
        assert_eq!(report.params_checked, 2 * 4 * (4 * 16 + 16 * 4));
    }

    #[test]
    fn corrupted_gradient_is_caught_and_named() {
        let report =
            run(&toy_config(), &GradcheckOptions { seed: 0, corrupt_grad: true }).unwrap();
        assert!(!report.passed());
        // The corruption hits the first flat parameter: block 0's query A.
        assert_eq!(report.worst_param, "blocks.0.attn.q.lora_a[0]");
    }

    #[test]
    fn passes_across_seeds() {
        for seed in [1u64, 2, 3] {
            let report =
                run(&toy_config(), &GradcheckOptions { seed, corrupt_grad: false }).unwrap();
            assert!(report.passed(), "seed {seed}: max rel {}", report.max_rel_error);
        }
    }

    #[test]
    fn tiny_vocab_budget_is_rejected() {
        let config = EncoderConfig { vocab_size: 8, ..toy_config() };
        let err = run(&config, &GradcheckOptions { seed: 0, corrupt_grad: false }).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got: {err}");
    }
}
