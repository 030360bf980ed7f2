//! Supervised training of the appearance MLP on proposal crops.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState};
use crate::scenegen::{BBox, Dataset, GtObject, BACKGROUND, NUM_CLASSES};

use super::crop::{crop_resize, CROP_LEN};
use super::forward::{backward_weights, forward_batch};
use super::weights::BackboneWeights;

/// Hyper-parameters for [`train_backbone`]. Defaults are the tuned values the
/// rest of the pipeline assumes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneTrainOptions {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seeds both weight initialization and the per-epoch shuffle.
    pub seed: u64,
}

impl Default for BackboneTrainOptions {
    fn default() -> Self {
        BackboneTrainOptions {
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 64,
            epochs: 30,
            seed: 0,
        }
    }
}

/// What training did, epoch by epoch, plus final train-set quality.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean cross-entropy per epoch, in epoch order.
    pub epoch_losses: Vec<f64>,
    /// Mean cross-entropy of the returned weights over the whole train set.
    pub final_loss: f64,
    /// Fraction of crops whose argmax class equals the assigned label.
    pub overall_accuracy: f64,
    /// Accuracy per class label; `None` when the train set has no crop with
    /// that label.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Set when the loss fails to decrease over the first five epochs —
    /// the usual sign of a bad learning rate.
    pub divergence_warning: bool,
}

/// Class label for a proposal: the category of the ground-truth object it
/// overlaps most, when that overlap reaches IoU 0.5; otherwise background.
/// Equal-IoU ties go to the earliest object in scene order.
pub fn label_for(proposal: &BBox, objects: &[GtObject]) -> usize {
    let mut best_iou = 0.0;
    let mut best_cat = BACKGROUND;
    for obj in objects {
        let iou = proposal.iou(&obj.box_);
        if iou > best_iou {
            best_iou = iou;
            best_cat = obj.category;
        }
    }
    if best_iou >= 0.5 {
        best_cat
    } else {
        BACKGROUND
    }
}

/// Crops every proposal in the dataset and pairs it with its label.
/// Row `i` of the matrix is the `i`-th proposal in scene order.
pub(crate) fn collect_crops(data: &Dataset) -> Result<(Matrix, Vec<usize>)> {
    let mut flat = Vec::new();
    let mut labels = Vec::new();
    for record in &data.scenes {
        for proposal in &record.proposals {
            flat.extend_from_slice(&crop_resize(&record.scene.image, proposal)?);
            labels.push(label_for(proposal, &record.scene.objects));
        }
    }
    let n = labels.len();
    Ok((Matrix::from_raw(n, CROP_LEN, flat), labels))
}

/// Mean cross-entropy over a batch plus its gradient at the logits,
/// `(probs − onehot) / n`.
fn ce_loss_and_dlogits(probs: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let n = labels.len();
    let mut dlogits = probs.clone();
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        loss -= probs.get(r, label).max(1e-300).ln();
        let row = dlogits.row_mut(r);
        row[label] -= 1.0;
    }
    dlogits.scale(1.0 / n as f64);
    (loss / n as f64, dlogits)
}

fn gather_rows(all: &Matrix, rows: &[usize]) -> Matrix {
    let mut flat = Vec::with_capacity(rows.len() * all.cols());
    for &r in rows {
        flat.extend_from_slice(all.row(r));
    }
    Matrix::from_raw(rows.len(), all.cols(), flat)
}

/// Trains the MLP with minibatch gradient descent plus classical momentum.
///
/// Deterministic: a fixed dataset and options always produce bit-identical
/// weights (training itself is single-threaded). With `epochs == 0` the
/// freshly initialized weights are returned untouched.
pub fn train_backbone(
    data: &Dataset,
    opts: &BackboneTrainOptions,
) -> Result<(BackboneWeights, TrainReport)> {
    if opts.batch_size == 0 {
        return Err(Error::Argument("batch_size must be positive".into()));
    }
    if !(opts.learning_rate.is_finite() && opts.learning_rate > 0.0) {
        return Err(Error::Argument(format!(
            "learning_rate must be positive, got {}",
            opts.learning_rate
        )));
    }
    if !(0.0..1.0).contains(&opts.momentum) {
        return Err(Error::Argument(format!(
            "momentum must be in [0, 1), got {}",
            opts.momentum
        )));
    }
    let (crops, labels) = collect_crops(data)?;
    if labels.is_empty() {
        return Err(Error::Argument("dataset has no proposals to train on".into()));
    }

    let root = RngState::new(opts.seed);
    let mut w = BackboneWeights::init(&mut root.split(0));
    let mut shuffle_rng = root.split(1);
    let mut velocity = BackboneWeights::zeros();
    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    let mut order: Vec<usize> = (0..labels.len()).collect();

    for _ in 0..opts.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(opts.batch_size) {
            let x = gather_rows(&crops, batch);
            let batch_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let cache = forward_batch(&w, x)?;
            let (loss, dlogits) = ce_loss_and_dlogits(&cache.probs, &batch_labels);
            epoch_loss += loss * batch.len() as f64;
            let grad = backward_weights(&w, &cache, &dlogits)?;
            let pairs: [(&mut Matrix, &Matrix); 6] = [
                (&mut velocity.w1, &grad.w1),
                (&mut velocity.b1, &grad.b1),
                (&mut velocity.w2, &grad.w2),
                (&mut velocity.b2, &grad.b2),
                (&mut velocity.w3, &grad.w3),
                (&mut velocity.b3, &grad.b3),
            ];
            for (v, g) in pairs {
                v.scale(opts.momentum);
                v.add_scaled(-opts.learning_rate, g)?;
            }
            w.w1.add_assign(&velocity.w1)?;
            w.b1.add_assign(&velocity.b1)?;
            w.w2.add_assign(&velocity.w2)?;
            w.b2.add_assign(&velocity.b2)?;
            w.w3.add_assign(&velocity.w3)?;
            w.b3.add_assign(&velocity.b3)?;
        }
        epoch_losses.push(epoch_loss / labels.len() as f64);
    }

    // Final evaluation over the whole train set with the returned weights.
    let cache = forward_batch(&w, crops)?;
    let (final_loss, _) = ce_loss_and_dlogits(&cache.probs, &labels);
    let mut hits = vec![0usize; NUM_CLASSES];
    let mut totals = vec![0usize; NUM_CLASSES];
    for (r, &label) in labels.iter().enumerate() {
        let row = cache.probs.row(r);
        let pred = argmax(row);
        totals[label] += 1;
        if pred == label {
            hits[label] += 1;
        }
    }
    let overall_accuracy =
        hits.iter().sum::<usize>() as f64 / labels.len() as f64;
    let per_class_accuracy = hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| if t == 0 { None } else { Some(h as f64 / t as f64) })
        .collect();
    let divergence_warning = epoch_losses.len() >= 5
        && !epoch_losses[1..5]
            .iter()
            .any(|&l| l < epoch_losses[0]);

    Ok((
        w,
        TrainReport {
            epoch_losses,
            final_loss,
            overall_accuracy,
            per_class_accuracy,
            divergence_warning,
        },
    ))
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}
