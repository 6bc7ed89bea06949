//! Workbench for imperceptible adversarial attacks on a miniature
//! autoregressive image captioner.
//!
//! The crate is organized around five pieces:
//!
//! - [`tensor`]: dense f64 tensors with tape-based reverse-mode gradients,
//! - [`model`]: a small vision encoder + gated cross-attention decoder,
//!   greedy generation, and training,
//! - [`attack`]: untargeted/targeted objectives, l-infinity projection, APGD,
//!   and perturbation sparsification,
//! - [`metrics`]: CIDEr-D, BLEU-4, substring success rate, VQA accuracy, and
//!   the permuted-caption baseline,
//! - [`data`]: a deterministic synthetic shape-scene dataset with templated
//!   captions and QA pairs.
//!
//! Everything except the optional `std` parallel helpers works with `alloc`
//! alone; all float math routes through `libm` so results do not depend on
//! the enabled features.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod math;
pub mod metrics;
pub mod model;
#[cfg(feature = "std")]
pub mod parallel;
pub mod tensor;
