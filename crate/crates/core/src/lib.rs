//! Context-aware detection rescoring at desk scale.
//!
//! The pipeline in this crate mirrors a two-stage detector with a contextual
//! rescoring head, end to end but small enough to train on a laptop CPU:
//!
//! 1. [`scenegen`] draws synthetic 64×64 scenes whose object categories
//!    co-occur according to a controllable context model, and simulates the
//!    region proposals a detector's first stage would emit.
//! 2. [`backbone`] is a small MLP that classifies each proposed region from
//!    raw pixels and exposes its penultimate feature layer.
//! 3. [`encoder`] is a transformer encoder that consumes all regions of a
//!    scene at once (pooled features ⊕ normalized box, plus sinusoidal
//!    positions) and re-labels / re-scores / removes the baseline detections.
//! 4. [`scg`] trains the encoder with a scaled-conjugate-gradient optimizer;
//!    [`attacks`] synthesizes universal adversarial tiles (data-free and
//!    data-dependent) against the backbone; [`eval`] scores everything with
//!    mAP / F1 / AUC and per-region-size breakdowns.
//!
//! All stochastic steps take an explicit [`numerics::RngState`], every
//! artifact serializes deterministically, and the data-parallel loops (behind
//! the `parallel` feature, on by default) reduce in a fixed order, so reruns
//! are bit-identical regardless of thread count.

pub mod attacks;
pub mod backbone;
pub mod checkpoint;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod numerics;
pub mod par;
pub mod scenegen;
pub mod scg;

pub use error::{Error, Result};
