//! Per-proposal classification and the baseline detection report.

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::par;
use crate::scenegen::{BBox, Dataset, Image, SceneRecord, BACKGROUND};

use super::crop::{crop_resize, CROP_LEN};
use super::forward::forward_batch;
use super::train::argmax;
use super::weights::{BackboneWeights, FEATURE_DIM};

/// Detections below this confidence are dropped from the reported set.
pub const MIN_CONFIDENCE: f64 = 0.05;
/// Width of a mean-pooled feature vector (adjacent pairs of the 128-d layer).
pub const POOLED_DIM: usize = FEATURE_DIM / 2;

/// A reported detection: a box, a foreground category, and the classifier's
/// probability for that category.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub box_: BBox,
    pub category: usize,
    pub confidence: f64,
}

/// Everything the pipeline knows about one evaluated proposal, reported or
/// not: the region kept its feature activations and the full class
/// distribution so the rescorer can revisit the decision later.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionEval {
    pub box_: BBox,
    /// 128-d feature-layer activations.
    pub feature: Vec<f64>,
    /// All 9 class probabilities (background last).
    pub probs: Vec<f64>,
    /// Argmax over all classes, background included.
    pub category: usize,
    /// `probs[category]`.
    pub confidence: f64,
}

impl RegionEval {
    /// The detection this region would report as-is.
    pub fn to_detection(&self) -> Detection {
        Detection {
            box_: self.box_,
            category: self.category,
            confidence: self.confidence,
        }
    }
}

/// Classifies every proposal of one image. Output order matches input order,
/// one entry per proposal, background-argmax regions included.
pub fn detect(w: &BackboneWeights, image: &Image, proposals: &[BBox]) -> Result<Vec<RegionEval>> {
    if proposals.is_empty() {
        return Ok(Vec::new());
    }
    let mut flat = Vec::with_capacity(proposals.len() * CROP_LEN);
    for p in proposals {
        flat.extend_from_slice(&crop_resize(image, p)?);
    }
    let cache = forward_batch(w, Matrix::from_raw(proposals.len(), CROP_LEN, flat))?;
    let mut out = Vec::with_capacity(proposals.len());
    for (r, p) in proposals.iter().enumerate() {
        let probs = cache.probs.row(r).to_vec();
        let category = argmax(&probs);
        let confidence = probs[category];
        out.push(RegionEval {
            box_: *p,
            feature: cache.a2.row(r).to_vec(),
            probs,
            category,
            confidence,
        });
    }
    Ok(out)
}

/// [`detect`] over a stored scene record.
pub fn detect_regions(w: &BackboneWeights, record: &SceneRecord) -> Result<Vec<RegionEval>> {
    detect(w, &record.scene.image, &record.proposals)
}

/// Runs [`detect_regions`] over every scene of a dataset, in scene order,
/// in parallel when the `parallel` feature is on.
pub fn detect_regions_over(w: &BackboneWeights, data: &Dataset) -> Result<Vec<Vec<RegionEval>>> {
    par::ordered_map(&data.scenes, |record| detect_regions(w, record))
        .into_iter()
        .collect()
}

/// Always-sequential twin of [`detect_regions_over`].
pub fn detect_regions_over_seq(
    w: &BackboneWeights,
    data: &Dataset,
) -> Result<Vec<Vec<RegionEval>>> {
    par::ordered_map_seq(&data.scenes, |record| detect_regions(w, record))
        .into_iter()
        .collect()
}

/// The baseline detector's reported set: regions whose argmax is a foreground
/// category and whose confidence clears [`MIN_CONFIDENCE`].
pub fn baseline_reported(regions: &[RegionEval]) -> Vec<Detection> {
    regions
        .iter()
        .filter(|r| r.category != BACKGROUND && r.confidence >= MIN_CONFIDENCE)
        .map(RegionEval::to_detection)
        .collect()
}

/// Averages adjacent pairs: `[a, b, c, d] → [(a+b)/2, (c+d)/2]`. The length
/// must be even.
pub fn mean_pool(feature: &[f64]) -> Result<Vec<f64>> {
    if feature.len() % 2 != 0 {
        return Err(Error::Shape(format!(
            "mean_pool needs an even length, got {}",
            feature.len()
        )));
    }
    Ok(feature
        .chunks_exact(2)
        .map(|pair| (pair[0] + pair[1]) / 2.0)
        .collect())
}
