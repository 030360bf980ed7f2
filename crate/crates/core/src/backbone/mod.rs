//! Baseline appearance network: a small MLP over region crops.
//!
//! Stands in for the per-region classification stage of a two-stage detector.
//! Each proposal is cropped, resampled to 16×16×3, and pushed through
//! 768 → 256 → 128 → 9 dense layers (ReLU hidden, softmax out). The second
//! hidden layer is the "feature layer": the rescorer consumes it (mean-pooled
//! to 64), and the adversarial-tile objectives differentiate through it.

mod crop;
mod detect;
mod forward;
mod train;
mod weights;

pub use crop::{crop_resize, CROP_LEN, CROP_SIDE};
pub use detect::{
    baseline_reported, detect, detect_regions, detect_regions_over, detect_regions_over_seq,
    mean_pool, Detection, RegionEval, MIN_CONFIDENCE, POOLED_DIM,
};
pub use forward::forward;
pub(crate) use forward::{backward_input, forward_batch, BackSeeds};
pub use train::{label_for, train_backbone, BackboneTrainOptions, TrainReport};
pub(crate) use train::{argmax, collect_crops};
pub use weights::{BackboneWeights, FEATURE_DIM, HIDDEN1_DIM, INPUT_DIM};
