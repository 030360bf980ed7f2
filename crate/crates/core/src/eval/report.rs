//! Assembled evaluation reports and the region-size breakdown.

use serde::{Deserialize, Serialize};

use crate::backbone::Detection;
use crate::error::{Error, Result};
use crate::scenegen::GtObject;

use super::ap::{check_scene_counts, map_sweep, sweep_taus};
use super::matching::match_detections;
use super::scores::{f1_micro, mean_auc, AucMode, F1_SCORE_MIN, SCORE_TAU};

/// Column schema of the flat CSV emitted next to the JSON reports.
pub const CSV_HEADER: &str = "model,attack,mode,epsilon,seed,map50,map5095,f1,mean_auc,fool_rate";

/// The run condition a report describes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    /// Which detector produced the detections ("baseline" or "tedm").
    pub model: String,
    /// Attack kind ("none", "fff", "uap").
    pub attack: String,
    /// How the perturbation was applied ("none", "whole", "region").
    pub mode: String,
    /// Perturbation budget; 0 for clean runs.
    pub epsilon: f64,
    /// Seed of the run being evaluated.
    pub seed: u64,
}

/// Every metric of one (model, condition) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub condition: Condition,
    /// `per_category_ap[c][t]` = AP of category `c` at `taus[t]`.
    pub per_category_ap: Vec<Vec<f64>>,
    /// Whether category `c` has ground truth (and thus enters the means).
    pub category_present: Vec<bool>,
    /// The ten IoU thresholds of the sweep.
    pub taus: Vec<f64>,
    pub map50: f64,
    pub map5095: f64,
    pub f1: f64,
    /// Per-category AUC; `None` where the statistic is undefined.
    pub per_category_auc: Vec<Option<f64>>,
    pub mean_auc: f64,
    /// Crop-level fooling rate of the perturbation, when one was applied.
    pub fooling_rate: Option<f64>,
}

impl EvalReport {
    /// Checks every metric lies in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Consistency(format!("{name} {v} outside [0, 1]")));
            }
            Ok(())
        };
        unit("map50", self.map50)?;
        unit("map5095", self.map5095)?;
        unit("f1", self.f1)?;
        unit("mean_auc", self.mean_auc)?;
        for (c, row) in self.per_category_ap.iter().enumerate() {
            for (t, &ap) in row.iter().enumerate() {
                unit(&format!("ap[{c}][{t}]"), ap)?;
            }
        }
        for (c, auc) in self.per_category_auc.iter().enumerate() {
            if let Some(v) = auc {
                unit(&format!("auc[{c}]"), *v)?;
            }
        }
        if let Some(v) = self.fooling_rate {
            unit("fooling_rate", v)?;
        }
        Ok(())
    }

    /// The report as one CSV row under [`CSV_HEADER`]. Metrics are printed
    /// to six decimals; a missing fooling rate becomes an empty field.
    pub fn csv_row(&self) -> String {
        let fool = match self.fooling_rate {
            Some(v) => format!("{v:.6}"),
            None => String::new(),
        };
        format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
            self.condition.model,
            self.condition.attack,
            self.condition.mode,
            self.condition.epsilon,
            self.condition.seed,
            self.map50,
            self.map5095,
            self.f1,
            self.mean_auc,
            fool
        )
    }
}

/// Computes every metric for one condition and assembles the report.
/// `fooling_rate` comes from the attack synthesis when one applies.
pub fn build_report(
    condition: Condition,
    preds_by_scene: &[Vec<Detection>],
    gts_by_scene: &[Vec<GtObject>],
    fooling_rate: Option<f64>,
    auc_mode: AucMode,
) -> Result<EvalReport> {
    check_scene_counts(preds_by_scene, gts_by_scene)?;
    let sweep = map_sweep(preds_by_scene, gts_by_scene)?;
    let f1 = f1_micro(preds_by_scene, gts_by_scene, SCORE_TAU, F1_SCORE_MIN)?;
    let (per_category_auc, auc) = mean_auc(preds_by_scene, gts_by_scene, auc_mode)?;
    let report = EvalReport {
        condition,
        per_category_ap: sweep.per_category,
        category_present: sweep.category_present,
        taus: sweep_taus().to_vec(),
        map50: sweep.map50,
        map5095: sweep.map5095,
        f1,
        per_category_auc,
        mean_auc: auc,
        fooling_rate,
    };
    report.validate()?;
    Ok(report)
}

/// Recall in one ground-truth area quartile, clean versus attacked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileRow {
    /// Ground truths whose area falls in this quartile.
    pub gt_count: usize,
    pub clean_recall: f64,
    pub attacked_recall: f64,
    /// `clean_recall − attacked_recall`: how much the attack cost here.
    pub delta: f64,
}

/// Recall-by-object-size table comparing a clean run against an attacked one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeBreakdown {
    /// Area boundaries `[q25, q50, q75]` computed from all ground truths.
    pub boundaries: [f64; 3],
    /// Rows from the smallest-area quartile to the largest.
    pub quartiles: [QuartileRow; 4],
}

/// Linearly interpolated quantile of a sorted sample (the common
/// `x[(n−1)p]` convention).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Splits ground truths into area quartiles and reports recall at IoU 0.5 in
/// each, for the clean and the attacked detections of the same scenes.
pub fn region_size_breakdown(
    clean_by_scene: &[Vec<Detection>],
    attacked_by_scene: &[Vec<Detection>],
    gts_by_scene: &[Vec<GtObject>],
) -> Result<SizeBreakdown> {
    check_scene_counts(clean_by_scene, gts_by_scene)?;
    check_scene_counts(attacked_by_scene, gts_by_scene)?;
    let mut areas: Vec<f64> = gts_by_scene
        .iter()
        .flatten()
        .map(|g| g.box_.area())
        .collect();
    if areas.is_empty() {
        return Err(Error::Argument(
            "region size breakdown needs at least one ground truth".into(),
        ));
    }
    areas.sort_by(f64::total_cmp);
    let boundaries = [
        quantile_sorted(&areas, 0.25),
        quantile_sorted(&areas, 0.50),
        quantile_sorted(&areas, 0.75),
    ];
    let quartile_of = |area: f64| -> usize {
        boundaries.iter().position(|&b| area <= b).unwrap_or(3)
    };

    let mut matched_clean = [0usize; 4];
    let mut matched_attacked = [0usize; 4];
    let mut counts = [0usize; 4];
    for (s, gts) in gts_by_scene.iter().enumerate() {
        let clean = match_detections(&clean_by_scene[s], gts, SCORE_TAU)?;
        let attacked = match_detections(&attacked_by_scene[s], gts, SCORE_TAU)?;
        for (g, gt) in gts.iter().enumerate() {
            let q = quartile_of(gt.box_.area());
            counts[q] += 1;
            if clean.gt_matched(g) {
                matched_clean[q] += 1;
            }
            if attacked.gt_matched(g) {
                matched_attacked[q] += 1;
            }
        }
    }
    let quartiles = std::array::from_fn(|q| {
        let recall = |matched: usize| {
            if counts[q] == 0 {
                0.0
            } else {
                matched as f64 / counts[q] as f64
            }
        };
        let clean_recall = recall(matched_clean[q]);
        let attacked_recall = recall(matched_attacked[q]);
        QuartileRow {
            gt_count: counts[q],
            clean_recall,
            attacked_recall,
            delta: clean_recall - attacked_recall,
        }
    });
    Ok(SizeBreakdown { boundaries, quartiles })
}
