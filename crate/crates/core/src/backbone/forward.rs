//! Batched forward and backward passes through the appearance MLP.

use crate::error::{Error, Result};
use crate::numerics::{relu_in_place, softmax_in_place, Matrix};
use crate::scenegen::NUM_CLASSES;

use super::weights::{BackboneWeights, FEATURE_DIM, INPUT_DIM};

/// Every intermediate needed to run a backward pass: inputs, both post-ReLU
/// activations, and class probabilities. One row per crop.
pub(crate) struct ForwardCache {
    pub x: Matrix,     // n × 768
    pub a1: Matrix,    // n × 256
    pub a2: Matrix,    // n × 128 (the feature layer)
    pub probs: Matrix, // n × 9
}

fn add_row_bias(m: &mut Matrix, bias: &Matrix) -> Result<()> {
    if bias.shape() != (1, m.cols()) {
        return Err(Error::Shape(format!(
            "bias {}x{} against activations {}x{}",
            bias.rows(),
            bias.cols(),
            m.rows(),
            m.cols()
        )));
    }
    let b = bias.row(0);
    for r in 0..m.rows() {
        for (v, &bv) in m.row_mut(r).iter_mut().zip(b) {
            *v += bv;
        }
    }
    Ok(())
}

fn column_sum(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, m.cols());
    for r in 0..m.rows() {
        let row = m.row(r);
        for (o, &v) in out.row_mut(0).iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

/// Zeroes entries of `g` where the matching activation is not strictly
/// positive (ReLU gate).
fn mask_by_activation(g: &mut Matrix, a: &Matrix) {
    debug_assert_eq!(g.shape(), a.shape());
    for (gv, &av) in g.as_mut_slice().iter_mut().zip(a.as_slice()) {
        if av <= 0.0 {
            *gv = 0.0;
        }
    }
}

/// Runs all three layers over a batch of crops (one per row of `x`).
pub(crate) fn forward_batch(w: &BackboneWeights, x: Matrix) -> Result<ForwardCache> {
    if x.cols() != INPUT_DIM {
        return Err(Error::Shape(format!(
            "expected {INPUT_DIM}-wide crop rows, got {}",
            x.cols()
        )));
    }
    if !x.is_finite() {
        return Err(Error::Numeric("non-finite value in crop batch".into()));
    }
    let mut a1 = x.matmul_transb(&w.w1)?;
    add_row_bias(&mut a1, &w.b1)?;
    relu_in_place(a1.as_mut_slice());

    let mut a2 = a1.matmul_transb(&w.w2)?;
    add_row_bias(&mut a2, &w.b2)?;
    relu_in_place(a2.as_mut_slice());

    let mut logits = a2.matmul_transb(&w.w3)?;
    add_row_bias(&mut logits, &w.b3)?;
    if !logits.is_finite() {
        return Err(Error::Numeric("non-finite logits".into()));
    }

    let mut probs = logits;
    for r in 0..probs.rows() {
        softmax_in_place(probs.row_mut(r));
    }
    Ok(ForwardCache { x, a1, a2, probs })
}

/// Classifies one flattened 16×16×3 crop, returning the 128-d feature-layer
/// activations and the 9 class probabilities.
pub fn forward(w: &BackboneWeights, crop: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let x = Matrix::from_vec(1, INPUT_DIM, crop.to_vec()).map_err(|e| match e {
        Error::Shape(_) => Error::Shape(format!(
            "crop has {} values, expected {INPUT_DIM}",
            crop.len()
        )),
        other => other,
    })?;
    let cache = forward_batch(w, x)?;
    Ok((cache.a2.row(0).to_vec(), cache.probs.row(0).to_vec()))
}

/// Gradient of a scalar objective with respect to every weight and bias,
/// given the objective's gradient at the logits (`dlogits`, one row per crop).
/// Returned in the same container type as the weights themselves.
pub(crate) fn backward_weights(
    w: &BackboneWeights,
    cache: &ForwardCache,
    dlogits: &Matrix,
) -> Result<BackboneWeights> {
    if dlogits.shape() != (cache.x.rows(), NUM_CLASSES) {
        return Err(Error::Shape(format!(
            "dlogits {}x{} for a batch of {}",
            dlogits.rows(),
            dlogits.cols(),
            cache.x.rows()
        )));
    }
    let dw3 = dlogits.matmul_transa(&cache.a2)?;
    let db3 = column_sum(dlogits);

    let mut dz2 = dlogits.matmul(&w.w3)?;
    mask_by_activation(&mut dz2, &cache.a2);
    let dw2 = dz2.matmul_transa(&cache.a1)?;
    let db2 = column_sum(&dz2);

    let mut dz1 = dz2.matmul(&w.w2)?;
    mask_by_activation(&mut dz1, &cache.a1);
    let dw1 = dz1.matmul_transa(&cache.x)?;
    let db1 = column_sum(&dz1);

    Ok(BackboneWeights { w1: dw1, b1: db1, w2: dw2, b2: db2, w3: dw3, b3: db3 })
}

/// Upstream gradients injected at one or more depths of the network. The
/// adversarial objectives seed at logits (label flipping) or directly at the
/// hidden activations (activation magnitude), sometimes both.
#[derive(Default)]
pub(crate) struct BackSeeds<'a> {
    pub dlogits: Option<&'a Matrix>,
    pub da2: Option<&'a Matrix>,
    pub da1: Option<&'a Matrix>,
}

/// Gradient of a scalar objective with respect to the *input crops*, given
/// upstream seeds. Returns an `n × 768` matrix.
pub(crate) fn backward_input(
    w: &BackboneWeights,
    cache: &ForwardCache,
    seeds: BackSeeds<'_>,
) -> Result<Matrix> {
    let n = cache.x.rows();
    let mut da2 = match seeds.dlogits {
        Some(dl) => {
            if dl.shape() != (n, NUM_CLASSES) {
                return Err(Error::Shape(format!(
                    "dlogits {}x{} for a batch of {n}",
                    dl.rows(),
                    dl.cols()
                )));
            }
            dl.matmul(&w.w3)?
        }
        None => Matrix::zeros(n, FEATURE_DIM),
    };
    if let Some(seed) = seeds.da2 {
        da2.add_assign(seed)?;
    }
    mask_by_activation(&mut da2, &cache.a2);

    let mut da1 = da2.matmul(&w.w2)?;
    if let Some(seed) = seeds.da1 {
        da1.add_assign(seed)?;
    }
    mask_by_activation(&mut da1, &cache.a1);

    da1.matmul(&w.w1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::weights::HIDDEN1_DIM;
    use crate::numerics::{grad_check, grad_check_indices, RngState};
    use crate::scenegen::BACKGROUND;

    fn random_crop(rng: &mut RngState) -> Vec<f64> {
        (0..INPUT_DIM).map(|_| rng.uniform(0.0, 1.0)).collect()
    }

    #[test]
    fn zero_weights_give_zero_features_and_uniform_probs() {
        let w = BackboneWeights::zeros();
        let mut rng = RngState::new(1);
        let crop = random_crop(&mut rng);
        let (feat, probs) = forward(&w, &crop).unwrap();
        assert_eq!(feat.len(), FEATURE_DIM);
        assert!(feat.iter().all(|&v| v == 0.0));
        assert_eq!(probs.len(), NUM_CLASSES);
        for p in &probs {
            assert!((p - 1.0 / NUM_CLASSES as f64).abs() <= 1e-15);
        }
    }

    #[test]
    fn features_are_nonnegative_and_probs_sum_to_one() {
        let mut rng = RngState::new(2);
        let w = BackboneWeights::init(&mut rng);
        for _ in 0..20 {
            let crop = random_crop(&mut rng);
            let (feat, probs) = forward(&w, &crop).unwrap();
            assert!(feat.iter().all(|&v| v >= 0.0));
            let s: f64 = probs.iter().sum();
            assert!((s - 1.0).abs() <= 1e-9, "prob sum {s}");
        }
    }

    #[test]
    fn wrong_crop_length_is_a_shape_error() {
        let w = BackboneWeights::zeros();
        let err = forward(&w, &[0.5; 100]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
        assert!(err.to_string().contains("100"));
    }

    #[test]
    fn non_finite_crop_is_a_numeric_error() {
        let w = BackboneWeights::zeros();
        let mut crop = vec![0.5; INPUT_DIM];
        crop[3] = f64::INFINITY;
        assert!(matches!(forward(&w, &crop), Err(Error::Numeric(_))));
    }

    /// Cross-entropy of one fixed label as a function of the flattened
    /// weights, with its analytic gradient.
    fn ce_and_grad_in_weights(flat: &[f64], x: &Matrix, label: usize) -> Result<(f64, Vec<f64>)> {
        let w = BackboneWeights::from_flat(flat)?;
        let cache = forward_batch(&w, x.clone())?;
        let mut loss = 0.0;
        let mut dlogits = cache.probs.clone();
        for r in 0..cache.x.rows() {
            loss -= cache.probs.get(r, label).max(1e-300).ln();
            let row = dlogits.row_mut(r);
            row[label] -= 1.0;
        }
        let n = cache.x.rows() as f64;
        loss /= n;
        dlogits.scale(1.0 / n);
        let g = backward_weights(&w, &cache, &dlogits)?;
        Ok((loss, g.to_flat()))
    }

    #[test]
    fn weight_gradients_match_finite_differences_on_three_seeds() {
        for seed in [1u64, 2, 3] {
            let mut rng = RngState::new(seed);
            let w = BackboneWeights::init(&mut rng);
            let x = Matrix::from_fn(3, INPUT_DIM, |_, _| rng.uniform(0.0, 1.0));
            let label = (seed as usize) % NUM_CLASSES;
            let flat = w.to_flat();
            // Sample a few hundred coordinates spread across all six tensors;
            // a full sweep over ~230k parameters would dominate the suite.
            let schema = BackboneWeights::schema();
            let mut indices = Vec::new();
            let mut pick = rng.split(99);
            for (t, (_, r, c)) in schema.entries().iter().enumerate() {
                let off = schema.offset_of(t);
                for _ in 0..40 {
                    indices.push(off + pick.below(r * c));
                }
            }
            let err = grad_check_indices(
                |f| ce_and_grad_in_weights(f, &x, label),
                &flat,
                1e-5,
                &indices,
            )
            .unwrap();
            assert!(err <= 1e-4, "seed {seed}: weight grad rel err {err}");
        }
    }

    #[test]
    fn input_gradients_match_finite_differences_on_three_seeds() {
        for seed in [5u64, 6, 7] {
            let mut rng = RngState::new(seed);
            let w = BackboneWeights::init(&mut rng);
            let crop = random_crop(&mut rng);
            // Objective: logit of one class minus logit of another (the
            // label-flip surrogate the attacks differentiate). Log-prob
            // differences equal logit differences, the normalizer cancels.
            let (a, b) = (seed as usize % NUM_CLASSES, BACKGROUND);
            let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
                let xm = Matrix::from_vec(1, INPUT_DIM, x.to_vec())?;
                let cache = forward_batch(&w, xm)?;
                let val = cache.probs.get(0, a).ln() - cache.probs.get(0, b).ln();
                let mut dlogits = Matrix::zeros(1, NUM_CLASSES);
                dlogits.set(0, a, 1.0);
                dlogits.set(0, b, -1.0);
                let dx = backward_input(
                    &w,
                    &cache,
                    BackSeeds { dlogits: Some(&dlogits), ..Default::default() },
                )?;
                Ok((val, dx.as_slice().to_vec()))
            };
            let err = grad_check(f, &crop, 1e-5).unwrap();
            assert!(err <= 1e-4, "seed {seed}: input grad rel err {err}");
        }
    }

    #[test]
    fn activation_seeded_input_gradient_matches_finite_differences() {
        let mut rng = RngState::new(9);
        let w = BackboneWeights::init(&mut rng);
        let crop = random_crop(&mut rng);
        // Objective: sum of both hidden layers' activations, the shape of the
        // data-free tile objective.
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let xm = Matrix::from_vec(1, INPUT_DIM, x.to_vec())?;
            let cache = forward_batch(&w, xm)?;
            let val: f64 =
                cache.a1.as_slice().iter().sum::<f64>() + cache.a2.as_slice().iter().sum::<f64>();
            let ones1 = Matrix::from_fn(1, HIDDEN1_DIM, |_, _| 1.0);
            let ones2 = Matrix::from_fn(1, FEATURE_DIM, |_, _| 1.0);
            let dx = backward_input(
                &w,
                &cache,
                BackSeeds { dlogits: None, da2: Some(&ones2), da1: Some(&ones1) },
            )?;
            Ok((val, dx.as_slice().to_vec()))
        };
        let err = grad_check(f, &crop, 1e-5).unwrap();
        assert!(err <= 1e-4, "activation-seeded input grad rel err {err}");
    }

    #[test]
    fn batched_forward_matches_single_crop_forward() {
        let mut rng = RngState::new(12);
        let w = BackboneWeights::init(&mut rng);
        let crops: Vec<Vec<f64>> = (0..4).map(|_| random_crop(&mut rng)).collect();
        let mut flat = Vec::new();
        for c in &crops {
            flat.extend_from_slice(c);
        }
        let batch = forward_batch(&w, Matrix::from_vec(4, INPUT_DIM, flat).unwrap()).unwrap();
        for (r, c) in crops.iter().enumerate() {
            let (feat, probs) = forward(&w, c).unwrap();
            assert_eq!(batch.a2.row(r), feat.as_slice());
            assert_eq!(batch.probs.row(r), probs.as_slice());
        }
    }
}
