//! Universal adversarial perturbations against the region detector.
//!
//! Both attacks produce a single crop-sized tile bounded in L∞ norm that is
//! reused everywhere — tiled across the full canvas or resized onto each
//! proposed region:
//!
//! - [`fff_synthesize`] is data-free: it never sees an image, instead
//!   ascending the detector's mean hidden activations so any region the tile
//!   lands on produces corrupted features.
//! - [`uap_synthesize`] is data-dependent: it accumulates the small pushes
//!   needed to drive each labeled train crop across the decision boundary.
//!
//! [`apply_whole_image`] and [`apply_per_region`] carry a tile onto a scene;
//! [`fooling_rate`] measures the crop-level label-flip rate a tile achieves.

mod apply;
mod fff;
mod types;
mod uap;

pub use apply::{apply_per_region, apply_whole_image, fooling_rate};
pub use fff::fff_synthesize;
pub use types::{
    load_perturbation, save_perturbation, ApplyMode, AttackKind, AttackReport, Perturbation,
};
pub use uap::uap_synthesize;
