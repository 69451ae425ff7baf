//! Typed views over the `TSLW0001` container: slider artifacts, encoder
//! checkpoints, and conditioning exports.
//!
//! Every file kind shares the container layout and differs only in its JSON
//! metadata (`kind` field) and tensor naming scheme:
//!
//! * slider — `encoders.{e}.blocks.{b}.attn.{proj}.lora_a` / `.lora_b`
//! * encoder — the names from [`Encoder::named_tensors`]
//! * conditioning — `tokenwise.{e}` / `pooled.{e}`
//!
//! Sliders record the fingerprints of the encoders they were trained inside;
//! loading never checks fingerprints by itself (the file may be inspected
//! anywhere), but application against a mismatched encoder is refused by
//! [`SliderArtifact::validate_against`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::container::{read_container, write_container};
use crate::encoder::{Encoder, EncoderConfig, EncodingOutput};
use crate::error::{Error, Result};
use crate::lora::{AdapterSet, LayerId, LoraAdapter, ProjKind};
use crate::tensor::Tensor;
use crate::trainer::{PromptSpec, TrainConfig};

pub const FORMAT_VERSION: u32 = 1;

fn check_kind(meta: &Value, expected: &str, path: &Path) -> Result<()> {
    let kind = meta.get("kind").and_then(Value::as_str).unwrap_or("<missing>");
    if kind != expected {
        return Err(Error::format(format!(
            "{}: container kind is {kind:?}, expected {expected:?}",
            path.display()
        )));
    }
    let version = meta.get("format_version").and_then(Value::as_u64).unwrap_or(0);
    if version != FORMAT_VERSION as u64 {
        return Err(Error::format(format!(
            "{}: format_version {version} is not supported (want {FORMAT_VERSION})",
            path.display()
        )));
    }
    Ok(())
}

// ─── Slider artifacts ────────────────────────────────────────────────────────

/// Header of a slider artifact: provenance plus everything needed to check
/// compatibility before application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliderMeta {
    pub format_version: u32,
    pub kind: String,
    /// One fingerprint per trained encoder, in training order.
    pub encoder_fingerprints: Vec<String>,
    pub rank: usize,
    pub target_layers: Vec<String>,
    /// Echo of the training prompts.
    pub prompt: PromptSpec,
    pub epochs: usize,
    pub learning_rate: f32,
}

/// A trained (or composed) slider: metadata plus one adapter set per encoder.
#[derive(Debug, Clone)]
pub struct SliderArtifact {
    pub meta: SliderMeta,
    pub sets: Vec<AdapterSet>,
}

impl SliderArtifact {
    /// Package a finished training run.
    pub fn from_training(
        encoders: &[Encoder],
        spec: &PromptSpec,
        config: &TrainConfig,
        sets: Vec<AdapterSet>,
    ) -> Result<Self> {
        if encoders.len() != sets.len() {
            return Err(Error::contract(format!(
                "artifact needs one adapter set per encoder, got {} and {}",
                sets.len(),
                encoders.len()
            )));
        }
        let meta = SliderMeta {
            format_version: FORMAT_VERSION,
            kind: "slider".to_string(),
            encoder_fingerprints: encoders.iter().map(|e| e.fingerprint().to_string()).collect(),
            rank: config.rank,
            target_layers: ProjKind::ALL.iter().map(|k| k.as_str().to_string()).collect(),
            prompt: spec.clone(),
            epochs: config.epochs,
            learning_rate: config.learning_rate,
        };
        Ok(SliderArtifact { meta, sets })
    }

    /// Refuse to pair this slider with encoders it was not trained for. The
    /// caller supplies `name` (usually the artifact's path) for diagnostics.
    pub fn validate_against(&self, encoders: &[Encoder], name: &str) -> Result<()> {
        if encoders.len() != self.meta.encoder_fingerprints.len() {
            return Err(Error::config(format!(
                "slider {name} was trained with {} encoder(s) but {} were loaded",
                self.meta.encoder_fingerprints.len(),
                encoders.len()
            )));
        }
        for (i, (enc, want)) in encoders.iter().zip(&self.meta.encoder_fingerprints).enumerate() {
            if enc.fingerprint() != want {
                return Err(Error::config(format!(
                    "slider {name} does not match encoder {i}: fingerprint {} vs slider's {}",
                    enc.fingerprint(),
                    want
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tensors = BTreeMap::new();
        for (e, set) in self.sets.iter().enumerate() {
            for ad in set.adapters() {
                let stem = format!(
                    "encoders.{e}.blocks.{}.attn.{}",
                    ad.layer.block,
                    ad.layer.kind.as_str()
                );
                tensors.insert(format!("{stem}.lora_a"), ad.a.clone());
                tensors.insert(format!("{stem}.lora_b"), ad.b.clone());
            }
        }
        write_container(path, &serde_json::to_value(&self.meta)?, &tensors)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta_value, tensors) = read_container(path)?;
        check_kind(&meta_value, "slider", path)?;
        let meta: SliderMeta = serde_json::from_value(meta_value)?;

        // Group factor tensors per encoder and layer.
        let mut grouped: BTreeMap<(usize, usize, ProjKind), (Option<Tensor>, Option<Tensor>)> =
            BTreeMap::new();
        for (name, tensor) in tensors {
            let parts: Vec<&str> = name.split('.').collect();
            let parsed = match parts.as_slice() {
                ["encoders", e, "blocks", b, "attn", kind, factor] => {
                    match (e.parse(), b.parse(), ProjKind::parse(kind)) {
                        (Ok(e), Ok(b), Some(kind)) => Some((e, b, kind, *factor)),
                        _ => None,
                    }
                }
                _ => None,
            };
            let Some((e, b, kind, factor)) = parsed else {
                return Err(Error::format(format!(
                    "{}: unrecognized slider tensor name {name}",
                    path.display()
                )));
            };
            let slot = grouped.entry((e, b, kind)).or_default();
            match factor {
                "lora_a" => slot.0 = Some(tensor),
                "lora_b" => slot.1 = Some(tensor),
                other => {
                    return Err(Error::format(format!(
                        "{}: unrecognized factor {other} in tensor {name}",
                        path.display()
                    )));
                }
            }
        }
        let mut per_encoder: Vec<Vec<LoraAdapter>> =
            (0..meta.encoder_fingerprints.len()).map(|_| Vec::new()).collect();
        for ((e, block, kind), (a, b)) in grouped {
            let (Some(a), Some(b)) = (a, b) else {
                return Err(Error::format(format!(
                    "{}: adapter for encoder {e} block {block} {} is missing a factor",
                    path.display(),
                    kind.as_str()
                )));
            };
            let bucket = per_encoder.get_mut(e).ok_or_else(|| {
                Error::format(format!(
                    "{}: tensor references encoder {e} but the header lists {}",
                    path.display(),
                    meta.encoder_fingerprints.len()
                ))
            })?;
            bucket.push(LoraAdapter::new(LayerId { block, kind }, a, b)?);
        }
        let sets = per_encoder
            .into_iter()
            .map(|adapters| AdapterSet::from_adapters(adapters, 1.0))
            .collect::<Result<Vec<_>>>()?;
        Ok(SliderArtifact { meta, sets })
    }
}

// ─── Encoder checkpoints ─────────────────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
struct EncoderMeta {
    format_version: u32,
    kind: String,
    config: EncoderConfig,
}

pub fn save_encoder(encoder: &Encoder, path: &Path) -> Result<()> {
    let meta = EncoderMeta {
        format_version: FORMAT_VERSION,
        kind: "encoder".to_string(),
        config: encoder.config().clone(),
    };
    let tensors: BTreeMap<String, Tensor> = encoder.named_tensors().into_iter().collect();
    write_container(path, &serde_json::to_value(&meta)?, &tensors)
}

pub fn load_encoder(path: &Path) -> Result<Encoder> {
    let (meta_value, tensors) = read_container(path)?;
    check_kind(&meta_value, "encoder", path)?;
    let meta: EncoderMeta = serde_json::from_value(meta_value)?;
    Encoder::from_named_tensors(meta.config, tensors)
}

// ─── Conditioning exports ────────────────────────────────────────────────────

/// Echo of one applied slider inside a conditioning export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliderRef {
    pub path: String,
    pub alpha: f32,
}

/// Header of a conditioning export: the request that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningMeta {
    pub format_version: u32,
    pub kind: String,
    pub prompt: String,
    pub sliders: Vec<SliderRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestep: Option<u32>,
    pub t_gate: u32,
    pub encoder_fingerprints: Vec<String>,
}

/// Write per-encoder tokenwise/pooled embeddings for downstream consumers.
pub fn save_conditioning(
    path: &Path,
    meta: &ConditioningMeta,
    outputs: &[EncodingOutput],
) -> Result<()> {
    let mut tensors = BTreeMap::new();
    for (i, out) in outputs.iter().enumerate() {
        tensors.insert(format!("tokenwise.{i}"), out.tokenwise.clone());
        tensors.insert(format!("pooled.{i}"), out.pooled.clone());
    }
    write_container(path, &serde_json::to_value(meta)?, &tensors)
}

/// Read a conditioning export back: `(meta, per-encoder (tokenwise, pooled))`.
pub fn load_conditioning(path: &Path) -> Result<(ConditioningMeta, Vec<(Tensor, Tensor)>)> {
    let (meta_value, mut tensors) = read_container(path)?;
    check_kind(&meta_value, "conditioning", path)?;
    let meta: ConditioningMeta = serde_json::from_value(meta_value)?;
    let n = meta.encoder_fingerprints.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let tok = tensors.remove(&format!("tokenwise.{i}")).ok_or_else(|| {
            Error::format(format!("{}: tensor tokenwise.{i} is missing", path.display()))
        })?;
        let pool = tensors.remove(&format!("pooled.{i}")).ok_or_else(|| {
            Error::format(format!("{}: tensor pooled.{i} is missing", path.display()))
        })?;
        out.push((tok, pool));
    }
    Ok((meta, out))
}
