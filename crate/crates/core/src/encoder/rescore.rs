//! Applying a trained rescorer to one scene's detector output.

use crate::backbone::{argmax, Detection, RegionEval};
use crate::error::Result;
use crate::scenegen::BACKGROUND;

use super::forward::tedm_forward;
use super::train::build_tokens;
use super::weights::TedmWeights;

/// Rescores every evaluated region of a scene in one encoder pass.
///
/// Each region gets a fresh category and confidence from the rescorer's
/// probabilities; regions assigned to background are dropped. Boxes are never
/// modified, and the survivors come back in the order the regions were given.
/// An empty region list yields an empty result.
pub fn rescore(
    regions: &[RegionEval],
    side: f64,
    w: &TedmWeights,
    use_pe: bool,
) -> Result<Vec<Detection>> {
    if regions.is_empty() {
        return Ok(Vec::new());
    }
    let (tokens, origin) = build_tokens(regions, side)?;
    let probs = tedm_forward(&tokens, w, use_pe)?.probs;

    let mut kept: Vec<Option<Detection>> = vec![None; regions.len()];
    for (pos, &idx) in origin.iter().enumerate() {
        let row = probs.row(pos);
        let category = argmax(row);
        if category == BACKGROUND {
            continue;
        }
        kept[idx] = Some(Detection {
            box_: regions[idx].box_,
            category,
            confidence: row[category],
        });
    }
    Ok(kept.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{detect_regions, BackboneWeights};
    use crate::encoder::EncoderConfig;
    use crate::numerics::RngState;
    use crate::scenegen::{generate_dataset, ContextModel, Split, IMAGE_SIDE, NUM_CLASSES};

    fn scene_regions() -> Vec<RegionEval> {
        let cm = ContextModel::default();
        let data = generate_dataset(910, 1, Split::Val, &cm).unwrap();
        let mut rng = RngState::new(911);
        let backbone = BackboneWeights::init(&mut rng);
        detect_regions(&backbone, &data.scenes[0]).unwrap()
    }

    #[test]
    fn rescoring_preserves_boxes_and_never_reports_background() {
        let regions = scene_regions();
        let mut rng = RngState::new(912);
        let w = TedmWeights::init(&EncoderConfig::default(), &mut rng).unwrap();
        let side = IMAGE_SIDE as f64;
        let out = rescore(&regions, side, &w, true).unwrap();

        assert!(!out.is_empty() || regions.is_empty());
        let original: Vec<_> = regions.iter().map(|r| r.box_).collect();
        for det in &out {
            assert!(det.category < BACKGROUND, "background leaked through");
            assert!(det.confidence > 0.0 && det.confidence < 1.0);
            assert!(
                original.contains(&det.box_),
                "box was altered: {:?}",
                det.box_
            );
        }
        // Survivors keep the input region order.
        let positions: Vec<usize> = out
            .iter()
            .map(|d| original.iter().position(|b| *b == d.box_).unwrap())
            .collect();
        let mut sorted = positions.clone();
        sorted.sort_unstable();
        assert_eq!(positions, sorted);
    }

    #[test]
    fn confidence_is_the_probability_of_the_chosen_category() {
        let regions = scene_regions();
        let mut rng = RngState::new(913);
        let w = TedmWeights::init(&EncoderConfig::default(), &mut rng).unwrap();
        let side = IMAGE_SIDE as f64;

        let (tokens, origin) = build_tokens(&regions, side).unwrap();
        let probs = tedm_forward(&tokens, &w, true).unwrap().probs;
        let out = rescore(&regions, side, &w, true).unwrap();

        for det in &out {
            let region_idx = regions.iter().position(|r| r.box_ == det.box_).unwrap();
            let pos = origin.iter().position(|&i| i == region_idx).unwrap();
            let row = probs.row(pos);
            assert_eq!(det.confidence, row[det.category]);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(det.confidence, max);
        }
    }

    #[test]
    fn zero_weights_rescore_everything_as_the_first_category() {
        // Uniform probabilities tie across all classes; argmax takes the
        // lowest index, which is a real category, so nothing is dropped.
        let regions = scene_regions();
        let w = TedmWeights::zeros(&EncoderConfig::default()).unwrap();
        let out = rescore(&regions, IMAGE_SIDE as f64, &w, true).unwrap();
        assert_eq!(out.len(), regions.len());
        for det in &out {
            assert_eq!(det.category, 0);
            assert!((det.confidence - 1.0 / NUM_CLASSES as f64).abs() <= 1e-12);
        }
    }

    #[test]
    fn empty_input_is_fine() {
        let mut rng = RngState::new(914);
        let w = TedmWeights::init(&EncoderConfig::default(), &mut rng).unwrap();
        assert!(rescore(&[], IMAGE_SIDE as f64, &w, true).unwrap().is_empty());
    }
}
