//! Region extraction: nearest-neighbour crop-and-resize to a fixed tile.

use crate::error::{Error, Result};
use crate::scenegen::{BBox, Image, IMAGE_CHANNELS};

/// Side length of the resampled region tile.
pub const CROP_SIDE: usize = 16;
/// Flattened tile length: 16×16×3.
pub const CROP_LEN: usize = CROP_SIDE * CROP_SIDE * IMAGE_CHANNELS;

/// Resamples the sub-rectangle `b` of `image` to a 16×16×3 tile using
/// nearest-neighbour sampling, returned flattened in `(y, x, channel)`
/// row-major order.
///
/// The box is first clamped to the image bounds. Output cell `(i, j)` reads
/// source pixel `floor(origin + (index + 0.5) * extent / 16)` on each axis,
/// so an axis-aligned 16×16 box copies pixels through unchanged and a 32×32
/// box keeps every second pixel.
///
/// A box whose clamped width or height is below one pixel cannot be sampled
/// and is reported as a geometry error.
pub fn crop_resize(image: &Image, b: &BBox) -> Result<Vec<f64>> {
    let clamped = b.clamped(image.side() as f64);
    if clamped.w < 1.0 || clamped.h < 1.0 {
        return Err(Error::Geometry(format!(
            "box {:?} degenerates to {:.3}x{:.3} inside a {}x{} image",
            b.to_array(),
            clamped.w,
            clamped.h,
            image.side(),
            image.side()
        )));
    }
    let side = image.side() as f64;
    let mut out = Vec::with_capacity(CROP_LEN);
    for i in 0..CROP_SIDE {
        let sy = (clamped.y + (i as f64 + 0.5) * clamped.h / CROP_SIDE as f64)
            .floor()
            .clamp(0.0, side - 1.0) as usize;
        for j in 0..CROP_SIDE {
            let sx = (clamped.x + (j as f64 + 0.5) * clamped.w / CROP_SIDE as f64)
                .floor()
                .clamp(0.0, side - 1.0) as usize;
            for c in 0..IMAGE_CHANNELS {
                out.push(image.get(sx, sy, c));
            }
        }
    }
    Ok(out)
}
