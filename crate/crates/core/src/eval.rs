//! Embedding-space evaluation of trained sliders.
//!
//! Instead of rendering images, sliders are scored directly in the text
//! encoder's embedding space. The probe axis is the *concept direction*: the
//! normalized difference between the pooled embeddings of the positive and
//! negative prompts. A strength sweep then measures, per multiplier `α`:
//!
//! * **projection** — how far the target prompt's pooled embedding moved
//!   along the concept direction,
//! * **alignment** — the cosine between that movement and the direction
//!   (0 by convention when nothing moved),
//! * **drift** — the relative movement of each preserved prompt's pooled
//!   embedding, which a well-trained slider keeps small.
//!
//! With dual encoders, pooled embeddings are concatenated in encoder order
//! before any geometry, so one direction spans the joint space.

use crate::artifact::SliderArtifact;
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::lora::AdapterSet;
use crate::tape::Tape;
use crate::tokenizer::Vocab;
use crate::trainer::PromptSpec;

/// Default strength grid for sweeps.
pub const DEFAULT_ALPHAS: [f32; 5] = [0.0, 0.1, 0.2, 0.3, 0.4];

/// Pooled embeddings of `prompt` concatenated across encoders.
fn pooled_concat(
    encoders: &[Encoder],
    vocab: &Vocab,
    prompt: &str,
    sets: Option<&[AdapterSet]>,
) -> Result<Vec<f32>> {
    let tape = Tape::inert();
    let mut out = Vec::new();
    for (e, encoder) in encoders.iter().enumerate() {
        let seq = vocab.encode(prompt, encoder.config().max_len)?;
        let enc = encoder.encode(&tape, &seq, sets.map(|s| &s[e]))?;
        out.extend_from_slice(enc.pooled.data());
    }
    Ok(out)
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

fn norm(v: &[f32]) -> f64 {
    dot(v, v).sqrt()
}

/// The unit vector from the negative prompt's pooled embedding to the
/// positive prompt's, concatenated across encoders. Errors when the
/// difference is exactly zero (e.g. `positive == negative`), because no
/// direction exists to probe.
pub fn concept_direction(
    encoders: &[Encoder],
    vocab: &Vocab,
    spec: &PromptSpec,
) -> Result<Vec<f32>> {
    spec.validate()?;
    if encoders.is_empty() {
        return Err(Error::contract("concept direction requires at least one encoder".to_string()));
    }
    let plus = pooled_concat(encoders, vocab, &spec.positive, None)?;
    let minus = pooled_concat(encoders, vocab, &spec.negative, None)?;
    let diff: Vec<f32> = plus.iter().zip(&minus).map(|(p, m)| p - m).collect();
    let n = norm(&diff);
    if n == 0.0 {
        return Err(Error::DegenerateDirection(format!(
            "positive prompt {:?} and negative prompt {:?} produce identical embeddings",
            spec.positive, spec.negative
        )));
    }
    Ok(diff.iter().map(|x| (*x as f64 / n) as f32).collect())
}

/// One strength's measurements in a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f32,
    pub projection: f32,
    pub alignment: f32,
    /// Relative pooled-embedding movement per preserved prompt, in the order
    /// of [`SweepReport::qs`].
    pub drift: Vec<f32>,
}

/// Results of sweeping a slider over a strength grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// Flattened preserved prompts, naming the drift columns.
    pub qs: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// CSV with header `alpha,projection,alignment,drift:<q>...`; all floats
    /// printed with nine significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,projection,alignment");
        for q in &self.qs {
            out.push_str(",drift:");
            out.push_str(q);
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{:.8e},{:.8e},{:.8e}", row.alpha, row.projection, row.alignment));
            for d in &row.drift {
                out.push_str(&format!(",{d:.8e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Sweep `artifact` over `alphas`, measuring projection onto the concept
/// direction, alignment with it, and drift of every preserved prompt.
///
/// `alphas` must be finite and sorted ascending. The `alpha == 0` row is
/// exactly zero in every column: at multiplier zero the adapted encoder is
/// bit-identical to the base, so nothing moves.
pub fn sweep(
    artifact: &SliderArtifact,
    encoders: &[Encoder],
    vocab: &Vocab,
    spec: &PromptSpec,
    alphas: &[f32],
) -> Result<SweepReport> {
    spec.validate()?;
    if alphas.is_empty() {
        return Err(Error::contract("sweep needs at least one alpha".to_string()));
    }
    for pair in alphas.windows(2) {
        if !(pair[1] >= pair[0]) {
            return Err(Error::contract(format!(
                "alphas must be sorted ascending, got {} before {}",
                pair[0], pair[1]
            )));
        }
    }
    if alphas.iter().any(|a| !a.is_finite()) {
        return Err(Error::contract("alphas must be finite".to_string()));
    }
    artifact.validate_against(encoders, "slider")?;

    let direction = concept_direction(encoders, vocab, spec)?;
    let qs: Vec<String> = spec.flatten_q().iter().map(|q| q.to_string()).collect();
    let q_prompts: Vec<String> = qs.iter().map(|q| format!("{}, {}", spec.target, q)).collect();

    let base_target = pooled_concat(encoders, vocab, &spec.target, None)?;
    let mut base_q = Vec::with_capacity(q_prompts.len());
    for prompt in &q_prompts {
        let pooled = pooled_concat(encoders, vocab, prompt, None)?;
        let n = norm(&pooled);
        if n == 0.0 {
            return Err(Error::contract(format!(
                "preserved prompt {prompt:?} has a zero pooled embedding; drift is undefined"
            )));
        }
        base_q.push((pooled, n));
    }

    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut sets = artifact.sets.clone();
        for set in &mut sets {
            set.set_multiplier(alpha)?;
        }

        let moved = pooled_concat(encoders, vocab, &spec.target, Some(&sets))?;
        let delta: Vec<f32> = moved.iter().zip(&base_target).map(|(m, b)| m - b).collect();
        let projection = dot(&delta, &direction) as f32;
        let delta_norm = norm(&delta);
        let alignment = if delta_norm == 0.0 {
            0.0
        } else {
            (dot(&delta, &direction) / (delta_norm * norm(&direction))) as f32
        };

        let mut drift = Vec::with_capacity(q_prompts.len());
        for (prompt, (base, base_norm)) in q_prompts.iter().zip(&base_q) {
            let moved_q = pooled_concat(encoders, vocab, prompt, Some(&sets))?;
            let diff: Vec<f32> = moved_q.iter().zip(base).map(|(m, b)| m - b).collect();
            drift.push((norm(&diff) / base_norm) as f32);
        }

        rows.push(SweepRow { alpha, projection, alignment, drift });
    }

    Ok(SweepReport { qs, rows })
}
