//! Joint training of the rescorer on the frozen baseline detector's output.
//!
//! Every region the baseline evaluates becomes a token — including the ones it
//! calls background — so the rescorer learns both to demote false positives
//! and to resurrect detections the baseline suppressed. All weights are
//! trained jointly from random initialization by conjugate-gradient descent on
//! the mean token cross-entropy.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backbone::{detect_regions_over, label_for, mean_pool, BackboneWeights, RegionEval};
use crate::error::{Error, Result};
use crate::numerics::RngState;
use crate::par;
use crate::scenegen::{Dataset, IMAGE_SIDE, NUM_CLASSES};
use crate::scg::{scg_minimize, ScgOptions, ScgTrace};

use super::backward::scene_ce_and_grad;
use super::config::{EncoderConfig, RegionToken};
use super::weights::TedmWeights;

/// Options for rescorer training.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TedmTrainOptions {
    /// Optimizer settings for the full-batch objective.
    pub scg: ScgOptions,
    /// Seed for weight initialization.
    pub seed: u64,
    /// Whether token order is exposed through positional encodings.
    pub use_pe: bool,
}

impl Default for TedmTrainOptions {
    fn default() -> Self {
        TedmTrainOptions {
            scg: ScgOptions::default(),
            seed: 0,
            use_pe: true,
        }
    }
}

/// Converts one scene's region evaluations into the encoder's token sequence:
/// mean-pooled features joined with box geometry normalized by the image
/// side. Tokens are ordered by descending baseline confidence, ties broken by
/// box position, and positions are assigned in sequence order. Also returns
/// each token's index into `regions`.
pub fn build_tokens(regions: &[RegionEval], side: f64) -> Result<(Vec<RegionToken>, Vec<usize>)> {
    if !(side > 0.0) {
        return Err(Error::Argument(format!("image side must be > 0, got {side}")));
    }
    let mut order: Vec<usize> = (0..regions.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&regions[a], &regions[b]);
        rb.confidence
            .total_cmp(&ra.confidence)
            .then(ra.box_.x.total_cmp(&rb.box_.x))
            .then(ra.box_.y.total_cmp(&rb.box_.y))
    });
    let mut tokens = Vec::with_capacity(order.len());
    for (position, &idx) in order.iter().enumerate() {
        let r = &regions[idx];
        let b = r.box_.clamped(side);
        tokens.push(RegionToken {
            pooled: mean_pool(&r.feature)?,
            nbox: [
                (b.x + b.w / 2.0) / side,
                (b.y + b.h / 2.0) / side,
                b.w / side,
                b.h / side,
            ],
            position,
        });
    }
    Ok((tokens, order))
}

/// One scene prepared for the training objective.
pub(crate) struct SceneTokens {
    pub tokens: Vec<RegionToken>,
    pub labels: Vec<usize>,
}

/// Runs the frozen baseline over every scene and packages its regions as
/// labeled token sequences. Labels follow the detector's rule: the category
/// of the best-overlapping ground-truth box at IoU ≥ 0.5, otherwise
/// background.
pub(crate) fn prepare_scenes(
    data: &Dataset,
    backbone: &BackboneWeights,
) -> Result<Vec<SceneTokens>> {
    let side = IMAGE_SIDE as f64;
    let evals = detect_regions_over(backbone, data)?;
    let mut scenes = Vec::with_capacity(data.scenes.len());
    for (record, regions) in data.scenes.iter().zip(&evals) {
        if regions.is_empty() {
            continue;
        }
        let (tokens, origin) = build_tokens(regions, side)?;
        let labels = origin
            .iter()
            .map(|&i| label_for(&regions[i].box_, &record.scene.objects))
            .collect();
        scenes.push(SceneTokens { tokens, labels });
    }
    Ok(scenes)
}

/// The training objective: mean cross-entropy over every token of every
/// scene, with its gradient in the flattened weights. Scene contributions
/// reduce in a fixed block order, so the result does not depend on thread
/// scheduling.
pub(crate) fn mean_ce_objective(
    scenes: &[SceneTokens],
    config: &EncoderConfig,
    use_pe: bool,
    flat: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let total_tokens: usize = scenes.iter().map(|s| s.tokens.len()).sum();
    if total_tokens == 0 {
        return Err(Error::Argument(
            "no regions to train on: every scene is empty".into(),
        ));
    }
    let w = TedmWeights::from_flat(config, flat)?;
    let first_err: Mutex<Option<Error>> = Mutex::new(None);
    let (sum, mut grad) = par::block_objective(scenes, flat.len(), |scene, grad_out| {
        match scene_ce_and_grad(&w, &scene.tokens, &scene.labels, use_pe) {
            Ok((loss, g)) => {
                let mut offset = 0;
                for m in g.matrices() {
                    let part = m.as_slice();
                    for (acc, v) in grad_out[offset..offset + part.len()].iter_mut().zip(part) {
                        *acc += v;
                    }
                    offset += part.len();
                }
                loss
            }
            Err(e) => {
                let mut slot = first_err.lock().expect("error slot poisoned");
                if slot.is_none() {
                    *slot = Some(e);
                }
                f64::NAN
            }
        }
    });
    if let Some(e) = first_err.into_inner().expect("error slot poisoned") {
        return Err(e);
    }
    let inv_tokens = 1.0 / total_tokens as f64;
    for v in &mut grad {
        *v *= inv_tokens;
    }
    Ok((sum * inv_tokens, grad))
}

/// Trains the rescorer against a frozen baseline on every region of every
/// scene in `data`. All weights start from seeded random initialization and
/// are optimized jointly. Returns the best weights found and the optimizer
/// trace.
pub fn train_tedm(
    data: &Dataset,
    backbone: &BackboneWeights,
    config: &EncoderConfig,
    opts: &TedmTrainOptions,
) -> Result<(TedmWeights, ScgTrace)> {
    config.validate()?;
    if config.classes != NUM_CLASSES {
        return Err(Error::Argument(format!(
            "rescorer must predict all {NUM_CLASSES} classes (categories plus background), \
             configured for {}",
            config.classes
        )));
    }

    // The baseline is frozen, so tokens and labels are fixed for the whole
    // optimization and can be prepared once.
    let scenes = prepare_scenes(data, backbone)?;
    let mut rng = RngState::new(opts.seed);
    let w0 = TedmWeights::init(config, &mut rng)?.to_flat();

    let objective = |flat: &[f64]| mean_ce_objective(&scenes, config, opts.use_pe, flat);
    let (flat, trace) = scg_minimize(objective, &w0, &opts.scg)?;
    Ok((TedmWeights::from_flat(config, &flat)?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::POOLED_DIM;
    use crate::scenegen::{generate_dataset, BBox, ContextModel, Split};

    fn region(x: f64, y: f64, confidence: f64, feature_fill: f64) -> RegionEval {
        RegionEval {
            box_: BBox::new(x, y, 16.0, 16.0),
            feature: vec![feature_fill; 2 * POOLED_DIM],
            probs: vec![1.0 / NUM_CLASSES as f64; NUM_CLASSES],
            category: 0,
            confidence,
        }
    }

    #[test]
    fn tokens_are_ordered_by_confidence_then_position() {
        let regions = vec![
            region(8.0, 8.0, 0.4, 1.0),
            region(0.0, 4.0, 0.9, 2.0),
            region(0.0, 2.0, 0.4, 3.0), // ties region 0 on confidence; earlier x
            region(24.0, 0.0, 0.7, 4.0),
        ];
        let (tokens, origin) = build_tokens(&regions, 64.0).unwrap();
        assert_eq!(origin, vec![1, 3, 2, 0]);
        for (pos, tok) in tokens.iter().enumerate() {
            assert_eq!(tok.position, pos);
            assert_eq!(tok.pooled.len(), POOLED_DIM);
        }
        // Region 1 leads: pooled features average its fill value.
        assert_eq!(tokens[0].pooled[0], 2.0);
        // Normalized geometry of region 1: x=0, y=4, 16×16 on a 64 side.
        let nb = tokens[0].nbox;
        assert!((nb[0] - 8.0 / 64.0).abs() < 1e-12);
        assert!((nb[1] - 12.0 / 64.0).abs() < 1e-12);
        assert!((nb[2] - 0.25).abs() < 1e-12);
        assert!((nb[3] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn normalized_boxes_stay_in_the_unit_square() {
        // A box poking past the image edge is clamped before normalizing.
        let mut r = region(50.0, 60.0, 0.5, 0.0);
        r.box_ = BBox::new(50.0, 60.0, 30.0, 30.0);
        let (tokens, _) = build_tokens(&[r], 64.0).unwrap();
        for v in tokens[0].nbox {
            assert!((0.0..=1.0).contains(&v), "{:?}", tokens[0].nbox);
        }
        assert!(build_tokens(&[], 64.0).unwrap().0.is_empty());
        assert!(build_tokens(&[region(0.0, 0.0, 0.5, 0.0)], 0.0).is_err());
    }

    fn tiny_setup() -> (Dataset, BackboneWeights) {
        let cm = ContextModel::default();
        let data = generate_dataset(900, 6, Split::Train, &cm).unwrap();
        let mut rng = RngState::new(901);
        let backbone = BackboneWeights::init(&mut rng);
        (data, backbone)
    }

    #[test]
    fn training_is_deterministic_and_decreases_the_objective() {
        let (data, backbone) = tiny_setup();
        let config = EncoderConfig {
            d_model: 16,
            layers: 1,
            heads: 2,
            d_ff: 16,
            d_out: 8,
            hidden_units: 10,
            ..Default::default()
        };
        let opts = TedmTrainOptions {
            scg: ScgOptions {
                max_iters: 12,
                ..Default::default()
            },
            seed: 7,
            use_pe: true,
        };
        let (w1, t1) = train_tedm(&data, &backbone, &config, &opts).unwrap();
        let (w2, t2) = train_tedm(&data, &backbone, &config, &opts).unwrap();
        for (a, b) in w1.to_flat().iter().zip(w2.to_flat()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(t1.steps.len(), t2.steps.len());

        assert!(
            t1.steps.iter().any(|s| s.accepted),
            "optimizer never accepted a step"
        );
        // Each step records the objective entering that iteration, so any
        // accepted step shows up as a lower entry later in the trace.
        let first = t1.steps[0].objective;
        let best_entry = t1
            .steps
            .iter()
            .skip(1)
            .map(|s| s.objective)
            .fold(f64::INFINITY, f64::min);
        assert!(
            best_entry < first,
            "objective did not decrease: started at {first}, best later entry {best_entry}"
        );
    }

    #[test]
    fn end_to_end_training_gradient_survives_finite_differences() {
        // Two real scenes through the exact objective the optimizer sees:
        // baseline detection, token building, batched cross-entropy.
        let cm = ContextModel::default();
        let data = generate_dataset(920, 2, Split::Train, &cm).unwrap();
        let mut rng = RngState::new(921);
        let backbone = BackboneWeights::init(&mut rng);
        let scenes = prepare_scenes(&data, &backbone).unwrap();
        assert!(!scenes.is_empty());

        let config = EncoderConfig {
            d_model: 8,
            layers: 1,
            heads: 2,
            d_ff: 8,
            d_out: 4,
            hidden_units: 5,
            ..Default::default()
        };
        let w0 = TedmWeights::init(&config, &mut rng).unwrap().to_flat();
        let err = crate::numerics::grad_check(
            |flat| mean_ce_objective(&scenes, &config, true, flat),
            &w0,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "worst relative error {err}");
    }

    #[test]
    fn class_count_must_cover_background() {
        let (data, backbone) = tiny_setup();
        let config = EncoderConfig {
            classes: 4,
            ..Default::default()
        };
        let err = train_tedm(&data, &backbone, &config, &TedmTrainOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }
}
