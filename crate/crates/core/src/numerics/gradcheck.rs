//! Central-finite-difference validation of hand-derived gradients.
//!
//! Every analytic backward pass in this crate (backbone, encoder, classifier,
//! attack objectives) is checked against this harness in its module's tests.

use crate::error::{Error, Result};

/// Checks an analytic gradient against central finite differences at every
/// coordinate of `x`.
///
/// `f` evaluates the scalar objective and its full analytic gradient at a
/// point. Returns the worst relative error
/// `maxᵢ |analyticᵢ − centralᵢ| / max(1, |analyticᵢ|)`;
/// the `max(1, ·)` floor makes the measure absolute for small gradients.
pub fn grad_check<F>(f: F, x: &[f64], h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let indices: Vec<usize> = (0..x.len()).collect();
    grad_check_indices(f, x, h, &indices)
}

/// [`grad_check`] restricted to a subset of coordinates.
///
/// Large parameter vectors (the full backbone or encoder) are spot-checked on
/// sampled indices; small ones use [`grad_check`] which covers everything.
pub fn grad_check_indices<F>(mut f: F, x: &[f64], h: f64, indices: &[usize]) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(h > 0.0) {
        return Err(Error::Argument(format!("grad_check step must be > 0, got {h}")));
    }
    let (value, analytic) = f(x)?;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("objective is non-finite at base point: {value}")));
    }
    if analytic.len() != x.len() {
        return Err(Error::Shape(format!(
            "gradient length {} does not match point length {}",
            analytic.len(),
            x.len()
        )));
    }
    if let Some(i) = analytic.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("analytic gradient non-finite at index {i}")));
    }

    let mut xs = x.to_vec();
    let mut worst = 0.0_f64;
    for &i in indices {
        if i >= x.len() {
            return Err(Error::Argument(format!(
                "grad_check index {i} out of range for point of length {}",
                x.len()
            )));
        }
        let saved = xs[i];
        xs[i] = saved + h;
        let (fp, _) = f(&xs)?;
        xs[i] = saved - h;
        let (fm, _) = f(&xs)?;
        xs[i] = saved;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Numeric(format!(
                "objective non-finite when perturbing index {i}: f+={fp}, f-={fm}"
            )));
        }
        let central = (fp - fm) / (2.0 * h);
        let err = (analytic[i] - central).abs() / analytic[i].abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;

    #[test]
    fn half_squared_norm_checks_out() {
        let f = |x: &[f64]| {
            let value = 0.5 * x.iter().map(|v| v * v).sum::<f64>();
            Ok((value, x.to_vec()))
        };
        let mut rng = RngState::new(2);
        let x: Vec<f64> = (0..10).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let err = grad_check(f, &x, 1e-5).unwrap();
        assert!(err <= 1e-8, "relative error {err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let f = |x: &[f64]| Ok((3.25, vec![0.0; x.len()]));
        let err = grad_check(f, &[1.0, -2.0, 0.5], 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn linear_function_is_nearly_exact() {
        let a = [1.5, -0.25, 2.0, 0.75];
        let f = |x: &[f64]| {
            let value: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum();
            Ok((value, a.to_vec()))
        };
        let err = grad_check(f, &[0.2, 0.4, -0.6, 0.8], 1e-5).unwrap();
        assert!(err <= 1e-10, "relative error {err}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        // Claim gradient 2x for f(x) = ½‖x‖²; the checker must flag it.
        let f = |x: &[f64]| {
            let value = 0.5 * x.iter().map(|v| v * v).sum::<f64>();
            Ok((value, x.iter().map(|v| 2.0 * v).collect()))
        };
        let err = grad_check(f, &[1.0, 2.0], 1e-5).unwrap();
        assert!(err > 1e-2, "bogus gradient slipped through: {err}");
    }

    #[test]
    fn non_finite_evaluation_names_the_index() {
        let f = |x: &[f64]| {
            let value = x[1].ln(); // NaN once x[1] goes negative
            Ok((value, vec![0.0, 1.0 / x[1]]))
        };
        let err = grad_check(f, &[1.0, 1e-6], 1e-5).unwrap_err();
        match err {
            Error::Numeric(msg) => assert!(msg.contains("index 1"), "{msg}"),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn sampled_indices_match_full_check() {
        let f = |x: &[f64]| {
            let value = x.iter().map(|v| v.sin()).sum::<f64>();
            Ok((value, x.iter().map(|v| v.cos()).collect()))
        };
        let x: Vec<f64> = (0..20).map(|i| 0.1 * i as f64).collect();
        let full = grad_check(f, &x, 1e-5).unwrap();
        let sampled = grad_check_indices(f, &x, 1e-5, &[0, 7, 19]).unwrap();
        assert!(sampled <= full + 1e-15);
        assert!(full <= 1e-8);
    }
}
