//! Inference-time application: gate schedule and conditioning requests.
//!
//! Downstream samplers run denoising from high timesteps toward zero. To
//! preserve image layout, sliders stay disabled during the early (high-`t`)
//! steps: the gate returns multiplier 0 while `t > t_gate` and the requested
//! strength once `t ≤ t_gate` (boundary inclusive — at `t == t_gate` the
//! slider is already on). The default threshold is 800; real-image editing
//! setups typically gate at 550.
//!
//! [`condition`] is the one-call inference path: it checks slider/encoder
//! fingerprints, composes every requested slider at its gate-modulated
//! strength, and encodes the prompt once per encoder.

use crate::artifact::SliderArtifact;
use crate::encoder::{Encoder, EncodingOutput};
use crate::error::{Error, Result};
use crate::lora::{compose, AdapterSet};
use crate::tape::Tape;
use crate::tokenizer::Vocab;

/// Highest valid timestep of the 0–1000 denoising convention.
pub const MAX_TIMESTEP: u32 = 1000;

/// Default gate threshold for generation.
pub const DEFAULT_T_GATE: u32 = 800;

/// When sliders become active during denoising, and at what strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateSchedule {
    pub t_gate: u32,
    pub alpha_on: f32,
}

impl GateSchedule {
    pub fn new(t_gate: u32, alpha_on: f32) -> Result<Self> {
        if t_gate > MAX_TIMESTEP {
            return Err(Error::contract(format!(
                "t_gate {t_gate} is outside the timestep range 0..={MAX_TIMESTEP}"
            )));
        }
        if !alpha_on.is_finite() {
            return Err(Error::contract(format!("alpha_on must be finite, got {alpha_on}")));
        }
        Ok(GateSchedule { t_gate, alpha_on })
    }
}

/// The slider multiplier at timestep `t`: 0 while `t > t_gate` (early,
/// high-noise steps), `alpha_on` once `t ≤ t_gate`.
pub fn gate_multiplier(schedule: &GateSchedule, t: u32) -> Result<f32> {
    if t > MAX_TIMESTEP {
        return Err(Error::contract(format!(
            "timestep {t} is outside the range 0..={MAX_TIMESTEP}"
        )));
    }
    Ok(if t > schedule.t_gate { 0.0 } else { schedule.alpha_on })
}

/// One slider inside a conditioning request. `name` is only used in
/// diagnostics (the CLI passes the artifact's path).
#[derive(Debug)]
pub struct RequestedSlider<'a> {
    pub name: String,
    pub artifact: &'a SliderArtifact,
    pub alpha: f32,
}

/// Everything needed to produce conditioning embeddings for one prompt.
#[derive(Debug)]
pub struct ConditioningRequest<'a> {
    pub prompt: &'a str,
    pub sliders: Vec<RequestedSlider<'a>>,
    /// When present, the gate decides whether sliders are active; when
    /// absent, the raw alphas apply.
    pub timestep: Option<u32>,
}

/// Compose the requested sliders at gate-modulated strengths and encode the
/// prompt once per encoder. With no sliders (or with everything gated off)
/// the result is bit-identical to the base encoder's output.
pub fn condition(
    request: &ConditioningRequest,
    encoders: &[Encoder],
    vocab: &Vocab,
    t_gate: u32,
) -> Result<Vec<EncodingOutput>> {
    if encoders.is_empty() {
        return Err(Error::contract("conditioning requires at least one encoder".to_string()));
    }
    for slider in &request.sliders {
        slider.artifact.validate_against(encoders, &slider.name)?;
        if !slider.alpha.is_finite() {
            return Err(Error::contract(format!(
                "slider {} has non-finite alpha {}",
                slider.name, slider.alpha
            )));
        }
    }
    // Gate-modulated strengths; the gate zeroes every slider jointly.
    let alphas = request
        .sliders
        .iter()
        .map(|s| match request.timestep {
            Some(t) => gate_multiplier(&GateSchedule::new(t_gate, s.alpha)?, t),
            None => Ok(s.alpha),
        })
        .collect::<Result<Vec<f32>>>()?;

    let composed: Option<Vec<AdapterSet>> = if request.sliders.is_empty() {
        None
    } else {
        let per_encoder = (0..encoders.len())
            .map(|e| {
                let sets: Vec<&AdapterSet> =
                    request.sliders.iter().map(|s| &s.artifact.sets[e]).collect();
                compose(&sets, &alphas)
            })
            .collect::<Result<Vec<_>>>()?;
        Some(per_encoder)
    };

    let tape = Tape::inert();
    encoders
        .iter()
        .enumerate()
        .map(|(e, encoder)| {
            let seq = vocab.encode(request.prompt, encoder.config().max_len)?;
            encoder.encode(&tape, &seq, composed.as_ref().map(|sets| &sets[e]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::trainer::{train_slider, PromptSpec, TrainConfig};

    fn toy_encoder(seed: u64) -> Encoder {
        Encoder::init(EncoderConfig {
            vocab_size: 32,
            max_len: 8,
            d_model: 16,
            n_heads: 4,
            n_layers: 2,
            mlp_ratio: 4,
            seed,
            causal: true,
        })
        .unwrap()
    }

    fn toy_vocab() -> Vocab {
        Vocab::new(&["person", "old", "young", "hair", "tall"]).unwrap()
    }

    fn toy_slider(encoders: &[Encoder], epochs: usize, seed: u64) -> SliderArtifact {
        let spec = PromptSpec {
            target: "person".to_string(),
            positive: "person, old".to_string(),
            negative: "person, young".to_string(),
            preserved: vec![vec!["hair".to_string()]],
            q_mode: None,
        };
        let config = TrainConfig { epochs, seed, ..TrainConfig::default() };
        train_slider(encoders, &toy_vocab(), &spec, &config).unwrap().0
    }

    #[test]
    fn gate_is_a_step_function_with_inclusive_boundary() {
        let schedule = GateSchedule::new(800, 0.3).unwrap();
        assert_eq!(gate_multiplier(&schedule, 900).unwrap(), 0.0);
        assert_eq!(gate_multiplier(&schedule, 801).unwrap(), 0.0);
        assert_eq!(gate_multiplier(&schedule, 800).unwrap(), 0.3);
        assert_eq!(gate_multiplier(&schedule, 0).unwrap(), 0.3);

        let editing = GateSchedule::new(550, 0.3).unwrap();
        assert_eq!(gate_multiplier(&editing, 551).unwrap(), 0.0);
        assert_eq!(gate_multiplier(&editing, 100).unwrap(), 0.3);
    }

    #[test]
    fn out_of_range_timesteps_and_thresholds_are_rejected() {
        let schedule = GateSchedule::new(800, 0.3).unwrap();
        assert!(gate_multiplier(&schedule, 1001).is_err());
        assert!(GateSchedule::new(1001, 0.3).is_err());
        assert!(GateSchedule::new(800, f32::NAN).is_err());
    }

    #[test]
    fn no_sliders_is_the_base_encode() {
        let encoders = [toy_encoder(1)];
        let vocab = toy_vocab();
        let request =
            ConditioningRequest { prompt: "old person", sliders: vec![], timestep: None };
        let out = condition(&request, &encoders, &vocab, DEFAULT_T_GATE).unwrap();
        let seq = vocab.encode("old person", 8).unwrap();
        let base = encoders[0].encode(&Tape::inert(), &seq, None).unwrap();
        assert_eq!(out[0].tokenwise.data(), base.tokenwise.data());
        assert_eq!(out[0].pooled.data(), base.pooled.data());
    }

    #[test]
    fn gated_off_slider_is_bit_identical_to_base() {
        let encoders = [toy_encoder(2)];
        let vocab = toy_vocab();
        let slider = toy_slider(&encoders, 5, 0);
        let request = ConditioningRequest {
            prompt: "person",
            sliders: vec![RequestedSlider {
                name: "age.tsl".to_string(),
                artifact: &slider,
                alpha: 0.4,
            }],
            timestep: Some(900),
        };
        let out = condition(&request, &encoders, &vocab, 800).unwrap();
        let seq = vocab.encode("person", 8).unwrap();
        let base = encoders[0].encode(&Tape::inert(), &seq, None).unwrap();
        assert_eq!(out[0].tokenwise.data(), base.tokenwise.data());

        // At the boundary the slider switches on and the output moves.
        let request = ConditioningRequest { timestep: Some(800), ..request };
        let on = condition(&request, &encoders, &vocab, 800).unwrap();
        assert_ne!(on[0].tokenwise.data(), base.tokenwise.data());
    }

    #[test]
    fn two_sliders_match_the_library_composition_path() {
        let encoders = [toy_encoder(3)];
        let vocab = toy_vocab();
        let s1 = toy_slider(&encoders, 5, 10);
        let s2 = toy_slider(&encoders, 5, 11);
        let request = ConditioningRequest {
            prompt: "person",
            sliders: vec![
                RequestedSlider { name: "a".to_string(), artifact: &s1, alpha: 0.3 },
                RequestedSlider { name: "b".to_string(), artifact: &s2, alpha: -0.2 },
            ],
            timestep: None,
        };
        let out = condition(&request, &encoders, &vocab, DEFAULT_T_GATE).unwrap();

        let merged = compose(&[&s1.sets[0], &s2.sets[0]], &[0.3, -0.2]).unwrap();
        let seq = vocab.encode("person", 8).unwrap();
        let direct = encoders[0].encode(&Tape::inert(), &seq, Some(&merged)).unwrap();
        assert_eq!(out[0].tokenwise.data(), direct.tokenwise.data());
        assert_eq!(out[0].pooled.data(), direct.pooled.data());
    }

    #[test]
    fn fingerprint_mismatch_names_the_offending_slider() {
        let trained_on = [toy_encoder(4)];
        let other = [toy_encoder(5)];
        let vocab = toy_vocab();
        let slider = toy_slider(&trained_on, 2, 0);
        let request = ConditioningRequest {
            prompt: "person",
            sliders: vec![RequestedSlider {
                name: "mismatched.tsl".to_string(),
                artifact: &slider,
                alpha: 0.1,
            }],
            timestep: None,
        };
        let err = condition(&request, &other, &vocab, DEFAULT_T_GATE).unwrap_err();
        assert!(err.to_string().contains("mismatched.tsl"), "got: {err}");
    }

    #[test]
    fn conditioning_is_deterministic() {
        let encoders = [toy_encoder(6)];
        let vocab = toy_vocab();
        let slider = toy_slider(&encoders, 5, 7);
        let request = ConditioningRequest {
            prompt: "tall old person",
            sliders: vec![RequestedSlider {
                name: "age".to_string(),
                artifact: &slider,
                alpha: 0.25,
            }],
            timestep: Some(400),
        };
        let a = condition(&request, &encoders, &vocab, DEFAULT_T_GATE).unwrap();
        let b = condition(&request, &encoders, &vocab, DEFAULT_T_GATE).unwrap();
        assert_eq!(a[0].tokenwise.data(), b[0].tokenwise.data());
        assert_eq!(a[0].pooled.data(), b[0].pooled.data());
    }
}
