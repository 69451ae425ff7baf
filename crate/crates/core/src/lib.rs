//! Low-rank "slider" directions for a small causal text encoder.
//!
//! The crate trains rank-constrained LoRA adapters inside a frozen CLIP-style
//! text encoder so that a single scalar multiplier moves a prompt's embedding
//! along a learned concept direction (older/younger, smiling/frowning, ...).
//! Everything needed for that loop lives here:
//!
//! * [`tensor`] / [`tape`] / [`ops`] — a flat-buffer `f32` tensor type with a
//!   Wengert-list reverse-mode autodiff tape,
//! * [`tokenizer`] — a word-level tokenizer with fixed reserved ids,
//! * [`encoder`] — the causal pre-layernorm transformer text encoder,
//! * [`lora`] — low-rank adapters, multiplier control, and composition,
//! * [`trainer`] — contrastive target construction and the AdamW training loop,
//! * [`runtime`] — timestep gating and prompt conditioning for samplers,
//! * [`eval`] — embedding-space sweeps over slider strengths,
//! * [`container`] / [`artifact`] — the `TSLW0001` tensor container and the
//!   slider artifact format stored inside it,
//! * [`gradcheck`] — a finite-difference harness validating the backward pass
//!   against an independent straight-line `f64` reference forward.
//!
//! All floating-point state is `f32` with fixed summation order; every source
//! of randomness is a caller-supplied seed, so equal inputs give bit-identical
//! outputs.

pub mod artifact;
pub mod container;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod lora;
pub mod ops;
pub mod optim;
pub mod reference;
pub mod runtime;
pub mod tape;
pub mod tensor;
pub mod tokenizer;
pub mod trainer;

pub use error::{Error, Result};
pub use tape::Tape;
pub use tensor::Tensor;
