//! Detection metrics: IoU matching, interpolated AP with the mAP threshold
//! sweep, micro F1, per-category AUC, and assembled per-condition reports.
//!
//! All metrics share one matching protocol ([`match_detections`]): greedy in
//! descending confidence, same-category only, each ground truth claimed at
//! most once. On top of it sit:
//!
//! - [`average_precision`] / [`map_sweep`] — 101-point interpolated AP per
//!   category, pooled across scenes, averaged at IoU 0.5 and over the
//!   0.50–0.95 sweep;
//! - [`f1_micro`] — precision/recall harmonic mean over pooled TP/FP/FN at
//!   confidence ≥ 0.5;
//! - [`auc_per_category`] / [`mean_auc`] — how well confidence separates
//!   matched from unmatched detections, as a rank statistic or a
//!   threshold-sweep ROC area;
//! - [`build_report`] — every metric for one run condition, serializable to
//!   JSON and a flat CSV row;
//! - [`region_size_breakdown`] — recall by ground-truth area quartile,
//!   clean versus attacked.
//!
//! Everything is a pure function of its inputs: scene order never changes a
//! metric, and confidence ties break on box coordinates.

mod ap;
mod matching;
mod report;
mod scores;

pub use ap::{average_precision, map_sweep, sweep_taus, MapSweep, AP_GRID_POINTS};
pub use matching::{iou, match_detections, MatchOutcome, MatchResult};
pub use report::{
    build_report, quantile_sorted, region_size_breakdown, Condition, EvalReport, QuartileRow,
    SizeBreakdown, CSV_HEADER,
};
pub use scores::{auc_per_category, f1_micro, mean_auc, AucMode, F1_SCORE_MIN, SCORE_TAU};
