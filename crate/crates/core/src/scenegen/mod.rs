//! Synthetic scene generation with a controllable context model.
//!
//! Scenes are 64×64 RGB rasters containing 2–5 glyph objects. Categories are
//! organized into context groups: a scene samples one group and draws its
//! categories from it, with a configurable "leak" probability of swapping in
//! an out-of-group category. Two cross-group category pairs render with
//! identical glyphs and colors, so appearance alone cannot tell them apart —
//! only the co-occurring categories can. That is the signal the transformer
//! rescorer exists to exploit.
//!
//! The module also simulates the proposal stage of a two-stage detector
//! (jittered ground-truth boxes plus background distractors) and persists
//! datasets as JSON-lines.

mod generate;
mod io;
mod proposals;
mod types;

pub use generate::{generate_dataset, generate_dataset_seq, generate_scene};
pub use io::{load_dataset, save_dataset};
pub use proposals::propose_regions;
pub use types::{
    BBox, ContextModel, Dataset, GtObject, Image, Scene, SceneRecord, Split, BACKGROUND,
    IMAGE_CHANNELS, IMAGE_SIDE, NUM_CATEGORIES, NUM_CLASSES,
};
