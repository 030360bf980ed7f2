//! Data-dependent universal perturbation synthesis.
//!
//! Walk the labeled train crops in a shuffled order; whenever the current
//! tile fails to flip a crop's prediction, push that crop across the decision
//! boundary with a few signed cross-entropy ascent steps and fold the extra
//! displacement back into the tile, re-projecting onto the L∞ budget. Stop
//! once the tile flips the requested fraction of crops or the epoch cap is
//! reached.

use crate::backbone::{backward_input, forward_batch, BackSeeds, BackboneWeights, CROP_LEN};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState};
use crate::scenegen::{Dataset, BACKGROUND, NUM_CLASSES};

use super::apply::fooling_rate;
use super::types::{AttackKind, AttackReport, Perturbation};

/// Cap on boundary-crossing steps spent on a single crop per visit.
const MAX_STEPS_PER_CROP: usize = 10;

/// Cross-entropy of the true class for one crop, its gradient with respect to
/// the crop, and the predicted class.
pub(crate) fn ce_step(
    w: &BackboneWeights,
    x: &Matrix,
    label: usize,
) -> Result<(f64, Vec<f64>, usize)> {
    let cache = forward_batch(w, x.clone())?;
    let probs = cache.probs.row(0);
    let value = -probs[label].max(1e-300).ln();
    let mut dlogits = cache.probs.clone();
    dlogits.row_mut(0)[label] -= 1.0;
    let dx = backward_input(
        w,
        &cache,
        BackSeeds { dlogits: Some(&dlogits), ..BackSeeds::default() },
    )?;
    Ok((value, dx.as_slice().to_vec(), crate::backbone::argmax(probs)))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Synthesizes a universal perturbation tile from a dataset's labeled
/// (non-background) train crops.
///
/// Runs at most `max_epochs` passes, measuring the fooling rate after each;
/// the synthesis stops early once it reaches `target_fool`. The report's
/// trace holds the per-epoch fooling rates and its `fooling_rate` the last
/// measurement; `iters_used` on the tile counts individual gradient steps.
pub fn uap_synthesize(
    w: &BackboneWeights,
    data: &Dataset,
    epsilon: f64,
    target_fool: f64,
    max_epochs: usize,
    seed: u64,
) -> Result<(Perturbation, AttackReport)> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::Argument(format!(
            "perturbation budget must be finite and ≥ 0, got {epsilon}"
        )));
    }
    if !(target_fool > 0.0 && target_fool <= 1.0) {
        return Err(Error::Argument(format!(
            "target fooling rate must lie in (0, 1], got {target_fool}"
        )));
    }
    let (all_crops, all_labels) = crate::backbone::collect_crops(data)?;
    let mut flat = Vec::new();
    let mut labels = Vec::new();
    for (r, &label) in all_labels.iter().enumerate() {
        if label != BACKGROUND {
            flat.extend_from_slice(all_crops.row(r));
            labels.push(label);
        }
    }
    if labels.is_empty() {
        return Err(Error::Argument(
            "universal perturbation synthesis needs at least one labeled foreground crop".into(),
        ));
    }
    if labels.iter().any(|&l| l >= NUM_CLASSES) {
        return Err(Error::Argument("crop label out of class range".into()));
    }
    let crops = Matrix::from_raw(labels.len(), CROP_LEN, flat);

    if epsilon == 0.0 {
        let p = Perturbation::zero(0.0, AttackKind::Uap);
        let rate = fooling_rate(w, &crops, &p)?;
        let report = AttackReport {
            fooling_rate: Some(rate),
            objective_trace: vec![rate],
            epsilon,
            kind: AttackKind::Uap,
            seed,
        };
        return Ok((p, report));
    }

    let mut rng = RngState::new(seed);
    let mut v = vec![0.0; CROP_LEN];
    let step = epsilon / 10.0;
    let mut total_steps = 0usize;
    let mut trace = Vec::with_capacity(max_epochs);
    let mut order: Vec<usize> = (0..labels.len()).collect();

    for _ in 0..max_epochs {
        rng.shuffle(&mut order);
        for &i in &order {
            let crop = crops.row(i);
            let label = labels[i];
            let x0: Vec<f64> = crop.iter().zip(&v).map(|(a, b)| a + b).collect();
            let mut x = Matrix::from_raw(1, CROP_LEN, x0.clone());
            let mut steps = 0usize;
            loop {
                let (_, grad, predicted) = ce_step(w, &x, label)?;
                if predicted != label || steps == MAX_STEPS_PER_CROP {
                    break;
                }
                for (xv, g) in x.as_mut_slice().iter_mut().zip(&grad) {
                    *xv += step * sign(*g);
                }
                steps += 1;
            }
            if steps > 0 {
                for ((vv, xv), x0v) in v.iter_mut().zip(x.as_slice()).zip(&x0) {
                    *vv = (*vv + (xv - x0v)).clamp(-epsilon, epsilon);
                }
                total_steps += steps;
            }
        }
        let probe = Perturbation {
            tile: v.clone(),
            epsilon,
            kind: AttackKind::Uap,
            iters_used: total_steps,
        };
        let rate = fooling_rate(w, &crops, &probe)?;
        trace.push(rate);
        if rate >= target_fool {
            break;
        }
    }

    let p = Perturbation {
        tile: v,
        epsilon,
        kind: AttackKind::Uap,
        iters_used: total_steps,
    };
    p.validate()?;
    let report = AttackReport {
        fooling_rate: Some(*trace.last().expect("at least one epoch runs")),
        objective_trace: trace,
        epsilon,
        kind: AttackKind::Uap,
        seed,
    };
    Ok((p, report))
}
