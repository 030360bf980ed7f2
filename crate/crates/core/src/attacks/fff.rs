//! Data-free perturbation synthesis: saturate the detector's hidden layers.
//!
//! Without touching any training data, ascend the summed log of the mean
//! hidden activation across both feature layers. A tile that drives those
//! activations far from their usual range corrupts the features of every
//! region it lands on.

use crate::backbone::{backward_input, forward_batch, BackSeeds, BackboneWeights, CROP_LEN};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState};

use super::types::{AttackKind, AttackReport, Perturbation};

/// Smoothing constant keeping the log objective finite on dead layers.
const MEAN_EPS: f64 = 1e-6;

/// Elementwise sign with `sign(0) = 0`, matching the subgradient convention.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Objective `Σ_layers ln(mean(activations) + 1e-6)` for one tile, together
/// with its gradient with respect to the tile.
pub(crate) fn activation_objective(
    w: &BackboneWeights,
    tile: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let x = Matrix::from_vec(1, CROP_LEN, tile.to_vec())?;
    let cache = forward_batch(w, x)?;
    let n1 = cache.a1.cols() as f64;
    let n2 = cache.a2.cols() as f64;
    let mean1 = cache.a1.as_slice().iter().sum::<f64>() / n1;
    let mean2 = cache.a2.as_slice().iter().sum::<f64>() / n2;
    let value = (mean1 + MEAN_EPS).ln() + (mean2 + MEAN_EPS).ln();
    let da1 = Matrix::from_fn(1, cache.a1.cols(), |_, _| 1.0 / (n1 * (mean1 + MEAN_EPS)));
    let da2 = Matrix::from_fn(1, cache.a2.cols(), |_, _| 1.0 / (n2 * (mean2 + MEAN_EPS)));
    let dx = backward_input(
        w,
        &cache,
        BackSeeds { da1: Some(&da1), da2: Some(&da2), ..BackSeeds::default() },
    )?;
    Ok((value, dx.as_slice().to_vec()))
}

/// Synthesizes a data-free perturbation by iterated sign ascent on the
/// activation objective, step `ε/10`, projected onto the L∞ ball of radius
/// `ε` after every step.
///
/// The report's trace holds the objective at entry to each iteration plus the
/// final value (`iters + 1` entries); its fooling rate is unset because the
/// synthesis never sees data.
pub fn fff_synthesize(
    w: &BackboneWeights,
    epsilon: f64,
    iters: usize,
    seed: u64,
) -> Result<(Perturbation, AttackReport)> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::Argument(format!(
            "perturbation budget must be finite and ≥ 0, got {epsilon}"
        )));
    }
    if epsilon == 0.0 {
        let p = Perturbation::zero(0.0, AttackKind::Fff);
        let (value, _) = activation_objective(w, &p.tile)?;
        let report = AttackReport {
            fooling_rate: None,
            objective_trace: vec![value],
            epsilon,
            kind: AttackKind::Fff,
            seed,
        };
        return Ok((p, report));
    }

    let mut rng = RngState::new(seed);
    let mut tile: Vec<f64> = (0..CROP_LEN)
        .map(|_| rng.uniform(-epsilon / 2.0, epsilon / 2.0))
        .collect();
    let step = epsilon / 10.0;
    let mut trace = Vec::with_capacity(iters + 1);
    for _ in 0..iters {
        let (value, grad) = activation_objective(w, &tile)?;
        trace.push(value);
        for (t, g) in tile.iter_mut().zip(&grad) {
            *t = (*t + step * sign(*g)).clamp(-epsilon, epsilon);
        }
    }
    let (final_value, _) = activation_objective(w, &tile)?;
    trace.push(final_value);

    let p = Perturbation {
        tile,
        epsilon,
        kind: AttackKind::Fff,
        iters_used: iters,
    };
    p.validate()?;
    let report = AttackReport {
        fooling_rate: None,
        objective_trace: trace,
        epsilon,
        kind: AttackKind::Fff,
        seed,
    };
    Ok((p, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;

    fn trained_like_weights(seed: u64) -> BackboneWeights {
        BackboneWeights::init(&mut RngState::new(seed))
    }

    #[test]
    fn synthesis_is_deterministic() {
        let w = trained_like_weights(11);
        let (p1, r1) = fff_synthesize(&w, 0.06, 25, 77).unwrap();
        let (p2, r2) = fff_synthesize(&w, 0.06, 25, 77).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(r1, r2);
        let (p3, _) = fff_synthesize(&w, 0.06, 25, 78).unwrap();
        assert_ne!(p1.tile, p3.tile, "different seeds should explore differently");
    }

    #[test]
    fn ascent_improves_the_objective_and_saturates_the_budget() {
        for seed in [1u64, 2, 3] {
            let w = trained_like_weights(seed);
            let (p, r) = fff_synthesize(&w, 0.06, 60, seed).unwrap();
            assert_eq!(r.objective_trace.len(), 61);
            let first = r.objective_trace[0];
            let last = *r.objective_trace.last().unwrap();
            assert!(
                last > first,
                "seed {seed}: objective fell from {first} to {last}"
            );
            // Sign steps of ε/10 against an ε box: the tile should reach the
            // budget boundary somewhere once ascent has run for a while.
            assert!(
                (p.linf() - 0.06).abs() < 1e-12,
                "seed {seed}: tile never reached its budget, linf {}",
                p.linf()
            );
            assert_eq!(p.iters_used, 60);
            assert!(r.fooling_rate.is_none());
        }
    }

    #[test]
    fn zero_budget_returns_the_zero_tile() {
        let w = trained_like_weights(4);
        let (p, r) = fff_synthesize(&w, 0.0, 50, 9).unwrap();
        assert!(p.tile.iter().all(|&v| v == 0.0));
        assert_eq!(p.iters_used, 0);
        assert_eq!(r.objective_trace.len(), 1);
    }

    #[test]
    fn negative_or_non_finite_budgets_are_rejected() {
        let w = trained_like_weights(4);
        assert!(matches!(
            fff_synthesize(&w, -0.1, 5, 0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            fff_synthesize(&w, f64::NAN, 5, 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn activation_objective_gradient_survives_finite_differences() {
        for seed in [21u64, 22, 23] {
            let w = trained_like_weights(seed);
            let mut rng = RngState::new(seed + 100);
            let tile: Vec<f64> = (0..CROP_LEN).map(|_| rng.uniform(0.1, 0.9)).collect();
            let worst = grad_check(|t| activation_objective(&w, t), &tile, 1e-5).unwrap();
            assert!(worst <= 1e-4, "seed {seed}: worst relative error {worst}");
        }
    }
}
