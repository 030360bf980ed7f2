//! Element-wise activations and normalizations shared by the learning
//! modules.

use crate::error::{Error, Result};

/// Numerically safe softmax (max-subtraction before exponentiating).
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Argument("softmax of an empty vector".into()));
    }
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// In-place softmax over a non-empty slice; the hot-path variant used by the
/// forward passes, which guarantee non-emptiness structurally.
pub fn softmax_in_place(v: &mut [f64]) {
    debug_assert!(!v.is_empty());
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Layer normalization with learned gain/bias:
/// `gamma ⊙ (v − mean) / √(var + eps) + beta`, population variance.
pub fn layer_norm(v: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Result<Vec<f64>> {
    if v.len() != gamma.len() || v.len() != beta.len() {
        return Err(Error::Shape(format!(
            "layer_norm lengths differ: v={}, gamma={}, beta={}",
            v.len(),
            gamma.len(),
            beta.len()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::Argument(format!("layer_norm eps must be > 0, got {eps}")));
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv_sd = 1.0 / (var + eps).sqrt();
    Ok(v.iter()
        .zip(gamma.iter().zip(beta))
        .map(|(x, (g, b))| g * (x - mean) * inv_sd + b)
        .collect())
}

/// `max(0, x)` element-wise into a fresh vector.
pub fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

/// `max(0, x)` in place.
pub fn relu_in_place(v: &mut [f64]) {
    for x in v {
        *x = x.max(0.0);
    }
}

/// Logistic sigmoid.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
