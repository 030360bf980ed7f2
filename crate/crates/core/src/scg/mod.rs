//! Scaled conjugate gradient optimizer and weight flattening.
//!
//! The rescorer is trained by full-batch minimization with Møller's scaled
//! conjugate gradient method ([`scg_minimize`]); [`ParamSchema`] maps between
//! a model's named weight tensors and the flat vector the optimizer works on.

mod minimize;
mod params;

pub use minimize::{scg_minimize, ScgFailure, ScgOptions, ScgStep, ScgTrace};
pub use params::ParamSchema;
