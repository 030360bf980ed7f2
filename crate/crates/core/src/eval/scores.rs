//! Micro-averaged F1 and per-category AUC.

use serde::{Deserialize, Serialize};

use crate::backbone::Detection;
use crate::error::Result;
use crate::par;
use crate::scenegen::{GtObject, NUM_CATEGORIES};

use super::ap::check_scene_counts;
use super::matching::match_detections;

/// IoU threshold of the F1 and AUC computations.
pub const SCORE_TAU: f64 = 0.5;
/// Confidence floor below which detections do not count for F1.
pub const F1_SCORE_MIN: f64 = 0.5;

/// How per-category AUC is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AucMode {
    /// Rank statistic: probability a random matched detection outscores a
    /// random unmatched one, ties counted half. Exact.
    #[default]
    Rank,
    /// Area under the ROC polygon traced by sweeping a score threshold over
    /// a fixed 101-point grid. Approximate unless scores sit on the grid.
    Threshold,
}

/// Micro-averaged F1: detections below `score_min` are dropped, the rest are
/// matched at `tau`, and precision/recall are computed from the pooled
/// TP/FP/FN counts. Zero when precision and recall are both zero.
pub fn f1_micro(
    preds_by_scene: &[Vec<Detection>],
    gts_by_scene: &[Vec<GtObject>],
    tau: f64,
    score_min: f64,
) -> Result<f64> {
    check_scene_counts(preds_by_scene, gts_by_scene)?;
    let per_scene = par::ordered_map_indices(
        preds_by_scene.len(),
        |s| -> Result<(usize, usize, usize)> {
            let kept: Vec<Detection> = preds_by_scene[s]
                .iter()
                .filter(|p| p.confidence >= score_min)
                .cloned()
                .collect();
            let m = match_detections(&kept, &gts_by_scene[s], tau)?;
            Ok((m.true_positives(), m.false_positives(), m.unmatched_gt))
        },
    );
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for scene in per_scene {
        let (t, f, n) = scene?;
        tp += t;
        fp += f;
        fn_ += n;
    }
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    if precision + recall == 0.0 {
        Ok(0.0)
    } else {
        Ok(2.0 * precision * recall / (precision + recall))
    }
}

/// Collects one category's detection scores across scenes, split into
/// matched (positive) and unmatched (negative) at IoU [`SCORE_TAU`].
fn matched_unmatched_scores(
    category: usize,
    preds_by_scene: &[Vec<Detection>],
    gts_by_scene: &[Vec<GtObject>],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let per_scene = par::ordered_map_indices(
        preds_by_scene.len(),
        |s| -> Result<(Vec<f64>, Vec<f64>)> {
            let m = match_detections(&preds_by_scene[s], &gts_by_scene[s], SCORE_TAU)?;
            let mut pos = Vec::new();
            let mut neg = Vec::new();
            for o in &m.outcomes {
                let p = &preds_by_scene[s][o.pred];
                if p.category != category {
                    continue;
                }
                if o.matched_gt.is_some() {
                    pos.push(p.confidence);
                } else {
                    neg.push(p.confidence);
                }
            }
            Ok((pos, neg))
        },
    );
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for scene in per_scene {
        let (p, n) = scene?;
        pos.extend(p);
        neg.extend(n);
    }
    Ok((pos, neg))
}

/// Rank AUC with ties counted half.
fn rank_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &p in pos {
        for &n in neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() as f64 * neg.len() as f64)
}

/// Trapezoidal area under the ROC polygon from a descending sweep over the
/// fixed grid 1.00, 0.99, …, 0.00 (a point per threshold, ≥ comparison).
fn threshold_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let roc_point = |t: f64| -> (f64, f64) {
        let tpr = pos.iter().filter(|&&s| s >= t).count() as f64 / pos.len() as f64;
        let fpr = neg.iter().filter(|&&s| s >= t).count() as f64 / neg.len() as f64;
        (fpr, tpr)
    };
    let mut area = 0.0;
    let (mut prev_fpr, mut prev_tpr) = (0.0, 0.0);
    for k in (0..=100).rev() {
        let (fpr, tpr) = roc_point(k as f64 / 100.0);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        (prev_fpr, prev_tpr) = (fpr, tpr);
    }
    // Close the polygon at (1, 1) in case some scores exceed every grid
    // point; confidences are probabilities so this is normally a no-op.
    area += (1.0 - prev_fpr) * (1.0 + prev_tpr) / 2.0;
    area
}

/// AUC of one category: detections of that category are ranked by
/// confidence, positives being those matched to a ground truth. `None` when
/// the category has no matched or no unmatched detection (the statistic is
/// undefined on a single class).
pub fn auc_per_category(
    category: usize,
    preds_by_scene: &[Vec<Detection>],
    gts_by_scene: &[Vec<GtObject>],
    mode: AucMode,
) -> Result<Option<f64>> {
    check_scene_counts(preds_by_scene, gts_by_scene)?;
    let (pos, neg) = matched_unmatched_scores(category, preds_by_scene, gts_by_scene)?;
    if pos.is_empty() || neg.is_empty() {
        return Ok(None);
    }
    Ok(Some(match mode {
        AucMode::Rank => rank_auc(&pos, &neg),
        AucMode::Threshold => threshold_auc(&pos, &neg),
    }))
}

/// Per-category AUCs plus their mean over the categories where the statistic
/// is defined; mean 0 when it is defined nowhere.
pub fn mean_auc(
    preds_by_scene: &[Vec<Detection>],
    gts_by_scene: &[Vec<GtObject>],
    mode: AucMode,
) -> Result<(Vec<Option<f64>>, f64)> {
    let mut per_category = Vec::with_capacity(NUM_CATEGORIES);
    for c in 0..NUM_CATEGORIES {
        per_category.push(auc_per_category(c, preds_by_scene, gts_by_scene, mode)?);
    }
    let defined: Vec<f64> = per_category.iter().flatten().copied().collect();
    let mean = if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    Ok((per_category, mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::BBox;

    fn det(x: f64, y: f64, w: f64, h: f64, category: usize, confidence: f64) -> Detection {
        Detection { box_: BBox::new(x, y, w, h), category, confidence }
    }

    fn gt(x: f64, y: f64, w: f64, h: f64, category: usize) -> GtObject {
        GtObject { category, box_: BBox::new(x, y, w, h) }
    }

    #[test]
    fn perfect_detector_scores_f1_one_and_no_predictions_zero() {
        let gts = vec![vec![gt(0.0, 0.0, 8.0, 8.0, 0), gt(20.0, 20.0, 8.0, 8.0, 1)]];
        let preds = vec![vec![
            det(0.0, 0.0, 8.0, 8.0, 0, 0.9),
            det(20.0, 20.0, 8.0, 8.0, 1, 0.9),
        ]];
        assert_eq!(f1_micro(&preds, &gts, SCORE_TAU, F1_SCORE_MIN).unwrap(), 1.0);
        assert_eq!(f1_micro(&[vec![]], &gts, SCORE_TAU, F1_SCORE_MIN).unwrap(), 0.0);
    }

    #[test]
    fn one_tp_one_fp_one_fn_gives_half() {
        let gts = vec![vec![gt(0.0, 0.0, 8.0, 8.0, 0), gt(20.0, 20.0, 8.0, 8.0, 0)]];
        let preds = vec![vec![
            det(0.0, 0.0, 8.0, 8.0, 0, 0.9),   // TP
            det(40.0, 40.0, 8.0, 8.0, 0, 0.8), // FP; the second gt stays unmatched
        ]];
        assert_eq!(f1_micro(&preds, &gts, SCORE_TAU, F1_SCORE_MIN).unwrap(), 0.5);
    }

    #[test]
    fn low_confidence_detections_do_not_count() {
        let gts = vec![vec![gt(0.0, 0.0, 8.0, 8.0, 0)]];
        let preds = vec![vec![det(0.0, 0.0, 8.0, 8.0, 0, 0.49)]];
        assert_eq!(f1_micro(&preds, &gts, SCORE_TAU, F1_SCORE_MIN).unwrap(), 0.0);
    }

    /// One scene engineered so category 0's matched scores are `pos` and its
    /// unmatched scores are `neg`.
    fn auc_fixture(pos: &[f64], neg: &[f64]) -> (Vec<Vec<Detection>>, Vec<Vec<GtObject>>) {
        let mut preds = Vec::new();
        let mut gts = Vec::new();
        for (i, &score) in pos.iter().enumerate() {
            let x = 20.0 * i as f64;
            preds.push(det(x, 0.0, 8.0, 8.0, 0, score));
            gts.push(gt(x, 0.0, 8.0, 8.0, 0));
        }
        for (i, &score) in neg.iter().enumerate() {
            preds.push(det(20.0 * i as f64, 500.0, 8.0, 8.0, 0, score));
        }
        (vec![preds], vec![gts])
    }

    #[test]
    fn separated_scores_give_perfect_auc() {
        let (preds, gts) = auc_fixture(&[0.9, 0.8], &[0.3, 0.1]);
        let auc = auc_per_category(0, &preds, &gts, AucMode::Rank).unwrap();
        assert_eq!(auc, Some(1.0));
    }

    #[test]
    fn all_equal_scores_give_half() {
        let (preds, gts) = auc_fixture(&[0.5, 0.5], &[0.5, 0.5]);
        let auc = auc_per_category(0, &preds, &gts, AucMode::Rank).unwrap();
        assert_eq!(auc, Some(0.5));
    }

    #[test]
    fn interleaved_scores_give_three_quarters() {
        let (preds, gts) = auc_fixture(&[0.9, 0.2], &[0.8, 0.1]);
        let auc = auc_per_category(0, &preds, &gts, AucMode::Rank).unwrap();
        assert_eq!(auc, Some(0.75));
    }

    #[test]
    fn single_class_categories_are_undefined() {
        let (preds, gts) = auc_fixture(&[0.9], &[]);
        assert_eq!(auc_per_category(0, &preds, &gts, AucMode::Rank).unwrap(), None);
        let (preds, gts) = auc_fixture(&[], &[0.4]);
        assert_eq!(auc_per_category(0, &preds, &gts, AucMode::Rank).unwrap(), None);
        // Category 5 never appears at all.
        assert_eq!(auc_per_category(5, &preds, &gts, AucMode::Rank).unwrap(), None);
    }

    #[test]
    fn threshold_sweep_matches_rank_auc_on_grid_aligned_scores() {
        // All scores are multiples of 0.01, so the 101-point sweep visits
        // every distinct score and the polygon equals the exact statistic.
        let cases: [(&[f64], &[f64]); 3] = [
            (&[0.9, 0.2], &[0.8, 0.1]),
            (&[0.5, 0.5], &[0.5]),
            (&[0.93, 0.41, 0.41, 0.07], &[0.93, 0.4, 0.12]),
        ];
        for (pos, neg) in cases {
            let (preds, gts) = auc_fixture(pos, neg);
            let rank = auc_per_category(0, &preds, &gts, AucMode::Rank)
                .unwrap()
                .unwrap();
            let sweep = auc_per_category(0, &preds, &gts, AucMode::Threshold)
                .unwrap()
                .unwrap();
            assert!(
                (rank - sweep).abs() < 1e-12,
                "rank {rank} vs sweep {sweep} on {pos:?} / {neg:?}"
            );
        }
    }

    #[test]
    fn mean_auc_averages_only_defined_categories() {
        // Category 0 separable (AUC 1), category 1 only positives (skipped).
        let gts = vec![vec![gt(0.0, 0.0, 8.0, 8.0, 0), gt(30.0, 0.0, 8.0, 8.0, 1)]];
        let preds = vec![vec![
            det(0.0, 0.0, 8.0, 8.0, 0, 0.9),
            det(0.0, 400.0, 8.0, 8.0, 0, 0.2),
            det(30.0, 0.0, 8.0, 8.0, 1, 0.8),
        ]];
        let (per_category, mean) = mean_auc(&preds, &gts, AucMode::Rank).unwrap();
        assert_eq!(per_category[0], Some(1.0));
        assert_eq!(per_category[1], None);
        assert_eq!(mean, 1.0);
    }
}
