//! Average precision and the mAP threshold sweep.

use crate::backbone::Detection;
use crate::error::{Error, Result};
use crate::par;
use crate::scenegen::{GtObject, NUM_CATEGORIES};

use super::matching::match_detections;

/// Recall grid resolution of the interpolated AP.
pub const AP_GRID_POINTS: usize = 101;

/// The ten IoU thresholds of the mAP sweep: 0.50, 0.55, …, 0.95.
pub fn sweep_taus() -> [f64; 10] {
    std::array::from_fn(|k| 0.5 + 0.05 * k as f64)
}

/// One pooled prediction: its confidence, whether it matched, and its box
/// coordinates for deterministic tie-breaking.
#[derive(Debug, Clone, Copy)]
struct PoolEntry {
    confidence: f64,
    tp: bool,
    key: [f64; 4],
}

/// Sorts pooled predictions into scoring order: confidence descending; at
/// equal confidence false positives count first (the conservative order,
/// which also makes the curve independent of scene order); remaining ties by
/// box coordinates.
fn sort_pool(pool: &mut [PoolEntry]) {
    pool.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then((a.tp as u8).cmp(&(b.tp as u8)))
            .then_with(|| {
                for (x, y) in a.key.iter().zip(&b.key) {
                    let ord = x.total_cmp(y);
                    if ord != std::cmp::Ordering::Equal {
                        return ord;
                    }
                }
                std::cmp::Ordering::Equal
            })
    });
}

/// 101-point interpolated AP from a scored pool: the mean over the recall
/// grid of the best precision achieved at or beyond each grid point.
fn interpolated_ap(pool: &mut [PoolEntry], gt_count: usize) -> f64 {
    if gt_count == 0 {
        return 0.0;
    }
    sort_pool(pool);
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(pool.len());
    for (k, e) in pool.iter().enumerate() {
        if e.tp {
            tp += 1;
        }
        let precision = tp as f64 / (k + 1) as f64;
        let recall = tp as f64 / gt_count as f64;
        curve.push((recall, precision));
    }
    let mut total = 0.0;
    for g in 0..AP_GRID_POINTS {
        let r = g as f64 / (AP_GRID_POINTS - 1) as f64;
        let best = curve
            .iter()
            .filter(|(recall, _)| *recall >= r)
            .map(|&(_, p)| p)
            .fold(0.0, f64::max);
        total += best;
    }
    total / AP_GRID_POINTS as f64
}

/// Pools one category's predictions across scenes, matched at `tau`.
/// Returns the pool and the category's ground-truth count.
fn pool_category(
    category: usize,
    preds_by_scene: &[Vec<Detection>],
    gts_by_scene: &[Vec<GtObject>],
    tau: f64,
) -> Result<(Vec<PoolEntry>, usize)> {
    let per_scene = par::ordered_map_indices(
        preds_by_scene.len(),
        |s| -> Result<(Vec<PoolEntry>, usize)> {
            let preds: Vec<Detection> = preds_by_scene[s]
                .iter()
                .filter(|p| p.category == category)
                .cloned()
                .collect();
            let gts: Vec<GtObject> = gts_by_scene[s]
                .iter()
                .filter(|g| g.category == category)
                .cloned()
                .collect();
            let m = match_detections(&preds, &gts, tau)?;
            let entries = m
                .outcomes
                .iter()
                .map(|o| {
                    let p = &preds[o.pred];
                    PoolEntry {
                        confidence: p.confidence,
                        tp: o.matched_gt.is_some(),
                        key: [p.box_.x, p.box_.y, p.box_.w, p.box_.h],
                    }
                })
                .collect();
            Ok((entries, gts.len()))
        },
    );
    let mut pool = Vec::new();
    let mut gt_count = 0;
    for scene in per_scene {
        let (entries, n) = scene?;
        pool.extend(entries);
        gt_count += n;
    }
    Ok((pool, gt_count))
}

/// AP of one category at one IoU threshold, pooled over scenes. Zero when the
/// category has no ground truth anywhere.
pub fn average_precision(
    category: usize,
    preds_by_scene: &[Vec<Detection>],
    gts_by_scene: &[Vec<GtObject>],
    tau: f64,
) -> Result<f64> {
    check_scene_counts(preds_by_scene, gts_by_scene)?;
    let (mut pool, gt_count) = pool_category(category, preds_by_scene, gts_by_scene, tau)?;
    Ok(interpolated_ap(&mut pool, gt_count))
}

/// Full per-category AP table plus the two headline means.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSweep {
    /// `per_category[c][t]` is category `c`'s AP at `sweep_taus()[t]`.
    pub per_category: Vec<Vec<f64>>,
    /// Whether category `c` has at least one ground-truth instance; only
    /// these categories enter the means.
    pub category_present: Vec<bool>,
    /// Mean AP over present categories at IoU 0.5.
    pub map50: f64,
    /// Mean AP over present categories and all ten thresholds.
    pub map5095: f64,
}

/// Computes the mAP sweep over every foreground category. Categories without
/// ground truth are excluded from the means (their table rows stay zero).
pub fn map_sweep(
    preds_by_scene: &[Vec<Detection>],
    gts_by_scene: &[Vec<GtObject>],
) -> Result<MapSweep> {
    check_scene_counts(preds_by_scene, gts_by_scene)?;
    let taus = sweep_taus();
    let mut per_category = vec![vec![0.0; taus.len()]; NUM_CATEGORIES];
    let mut category_present = vec![false; NUM_CATEGORIES];
    for c in 0..NUM_CATEGORIES {
        for (t, &tau) in taus.iter().enumerate() {
            let (mut pool, gt_count) = pool_category(c, preds_by_scene, gts_by_scene, tau)?;
            category_present[c] = gt_count > 0;
            per_category[c][t] = interpolated_ap(&mut pool, gt_count);
        }
    }
    let present: Vec<usize> = (0..NUM_CATEGORIES).filter(|&c| category_present[c]).collect();
    let (map50, map5095) = if present.is_empty() {
        (0.0, 0.0)
    } else {
        let map50 = present.iter().map(|&c| per_category[c][0]).sum::<f64>() / present.len() as f64;
        let all: f64 = present
            .iter()
            .map(|&c| per_category[c].iter().sum::<f64>() / taus.len() as f64)
            .sum();
        (map50, all / present.len() as f64)
    };
    Ok(MapSweep { per_category, category_present, map50, map5095 })
}

pub(crate) fn check_scene_counts<P, G>(preds: &[P], gts: &[G]) -> Result<()> {
    if preds.len() != gts.len() {
        return Err(Error::Consistency(format!(
            "{} prediction scenes against {} ground-truth scenes",
            preds.len(),
            gts.len()
        )));
    }
    Ok(())
}
