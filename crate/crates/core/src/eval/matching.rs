//! Greedy detection-to-ground-truth matching.

use crate::backbone::Detection;
use crate::error::{Error, Result};
use crate::scenegen::{BBox, GtObject};

/// Intersection-over-union of two boxes; 0 when disjoint or degenerate.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

/// One prediction's fate after matching, in processing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchOutcome {
    /// Index into the caller's prediction list.
    pub pred: usize,
    /// Index of the ground truth this prediction claimed, if any. `Some`
    /// marks a true positive, `None` a false positive.
    pub matched_gt: Option<usize>,
}

/// Result of matching one scene's predictions against its ground truths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// One entry per prediction, in descending-confidence processing order
    /// (ties broken by box coordinates, lexicographically).
    pub outcomes: Vec<MatchOutcome>,
    /// Ground truths no prediction claimed.
    pub unmatched_gt: usize,
}

impl MatchResult {
    /// Number of true positives.
    pub fn true_positives(&self) -> usize {
        self.outcomes.iter().filter(|o| o.matched_gt.is_some()).count()
    }

    /// Number of false positives.
    pub fn false_positives(&self) -> usize {
        self.outcomes.len() - self.true_positives()
    }

    /// Flags ground truth `g` as matched or missed.
    pub fn gt_matched(&self, g: usize) -> bool {
        self.outcomes.iter().any(|o| o.matched_gt == Some(g))
    }
}

/// Total order on predictions: confidence descending, ties by box
/// coordinates `(x, y, w, h)` lexicographically ascending.
pub(crate) fn processing_order(preds: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&preds[a], &preds[b]);
        pb.confidence
            .total_cmp(&pa.confidence)
            .then(pa.box_.x.total_cmp(&pb.box_.x))
            .then(pa.box_.y.total_cmp(&pb.box_.y))
            .then(pa.box_.w.total_cmp(&pb.box_.w))
            .then(pa.box_.h.total_cmp(&pb.box_.h))
    });
    order
}

/// Greedily matches predictions to ground truths at IoU threshold `tau`.
///
/// Predictions are processed in descending confidence order (ties by box
/// coordinates); each claims the not-yet-claimed ground truth of its own
/// category with the highest IoU, provided that IoU reaches `tau`. Equal-IoU
/// ties go to the lowest ground-truth index. Each ground truth is claimed at
/// most once.
pub fn match_detections(
    preds: &[Detection],
    gts: &[GtObject],
    tau: f64,
) -> Result<MatchResult> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Argument(format!(
            "IoU threshold must lie in (0, 1], got {tau}"
        )));
    }
    let mut taken = vec![false; gts.len()];
    let mut outcomes = Vec::with_capacity(preds.len());
    for idx in processing_order(preds) {
        let p = &preds[idx];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] || gt.category != p.category {
                continue;
            }
            let overlap = iou(&p.box_, &gt.box_);
            if overlap >= tau && best.map_or(true, |(_, b)| overlap > b) {
                best = Some((g, overlap));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
        }
        outcomes.push(MatchOutcome {
            pred: idx,
            matched_gt: best.map(|(g, _)| g),
        });
    }
    Ok(MatchResult {
        outcomes,
        unmatched_gt: taken.iter().filter(|&&t| !t).count(),
    })
}
