//! Minimal dense linear algebra, deterministic RNG, and a gradient checker.
//!
//! Everything downstream (backbone, encoder, attacks) builds on these
//! kernels. They are deliberately plain: row-major `f64` storage, no BLAS, no
//! autodiff — gradients elsewhere in the crate are derived by hand and
//! validated against [`grad_check`].

mod gradcheck;
mod matrix;
mod ops;
mod rng;

pub use gradcheck::{grad_check, grad_check_indices};
pub use matrix::Matrix;
pub use ops::{layer_norm, relu, relu_in_place, sigmoid, softmax, softmax_in_place};
pub use rng::RngState;
