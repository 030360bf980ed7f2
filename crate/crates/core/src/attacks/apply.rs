//! Applying a perturbation tile to scenes and measuring crop-level fooling.

use crate::backbone::{forward_batch, BackboneWeights, CROP_LEN, CROP_SIDE};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scenegen::{BBox, Image, IMAGE_CHANNELS};

use super::types::Perturbation;

/// Tiles the perturbation across the full canvas: pixel `(row, col)` receives
/// tile entry `(row mod 16, col mod 16)`. The result is clipped to `[0, 1]`.
pub fn apply_whole_image(image: &Image, p: &Perturbation) -> Result<Image> {
    p.validate()?;
    let side = image.side();
    let mut data = image.data().to_vec();
    for row in 0..side {
        let ti = row % CROP_SIDE;
        for col in 0..side {
            let tj = col % CROP_SIDE;
            for c in 0..IMAGE_CHANNELS {
                let v = &mut data[image.idx(col, row, c)];
                *v = (*v + p.tile[(ti * CROP_SIDE + tj) * IMAGE_CHANNELS + c]).clamp(0.0, 1.0);
            }
        }
    }
    Image::from_data(side, data)
}

/// Resizes the tile onto each box's integer pixel footprint with
/// nearest-neighbour sampling and adds it in place. Overlapping boxes
/// accumulate; the image is clipped to `[0, 1]` once at the end, so the
/// per-pixel change can exceed the budget only where regions overlap.
pub fn apply_per_region(image: &Image, boxes: &[BBox], p: &Perturbation) -> Result<Image> {
    p.validate()?;
    let side = image.side();
    let mut acc = vec![0.0; image.data().len()];
    for b in boxes {
        let clamped = b.clamped(side as f64);
        let row0 = clamped.y.floor() as usize;
        let row1 = (clamped.y + clamped.h).ceil().min(side as f64) as usize;
        let col0 = clamped.x.floor() as usize;
        let col1 = (clamped.x + clamped.w).ceil().min(side as f64) as usize;
        if row1 <= row0 || col1 <= col0 {
            continue;
        }
        let fh = (row1 - row0) as f64;
        let fw = (col1 - col0) as f64;
        for row in row0..row1 {
            let ti = (((row - row0) as f64 + 0.5) * CROP_SIDE as f64 / fh).floor() as usize;
            let ti = ti.min(CROP_SIDE - 1);
            for col in col0..col1 {
                let tj = (((col - col0) as f64 + 0.5) * CROP_SIDE as f64 / fw).floor() as usize;
                let tj = tj.min(CROP_SIDE - 1);
                for c in 0..IMAGE_CHANNELS {
                    acc[image.idx(col, row, c)] +=
                        p.tile[(ti * CROP_SIDE + tj) * IMAGE_CHANNELS + c];
                }
            }
        }
    }
    let data = image
        .data()
        .iter()
        .zip(&acc)
        .map(|(v, d)| (v + d).clamp(0.0, 1.0))
        .collect();
    Image::from_data(side, data)
}

/// Adds the tile to one flattened crop, clipping to pixel range.
pub(crate) fn perturb_crop(crop: &[f64], tile: &[f64]) -> Vec<f64> {
    crop.iter()
        .zip(tile)
        .map(|(v, d)| (v + d).clamp(0.0, 1.0))
        .collect()
}

/// Fraction of crops whose predicted category changes when the tile is added.
/// `crops` is one flattened crop per row.
pub fn fooling_rate(w: &BackboneWeights, crops: &Matrix, p: &Perturbation) -> Result<f64> {
    p.validate()?;
    if crops.rows() == 0 {
        return Err(Error::Argument("fooling rate needs at least one crop".into()));
    }
    if crops.cols() != CROP_LEN {
        return Err(Error::Shape(format!(
            "crops have {} columns, expected {CROP_LEN}",
            crops.cols()
        )));
    }
    let clean = forward_batch(w, crops.clone())?;
    let mut flat = Vec::with_capacity(crops.rows() * CROP_LEN);
    for r in 0..crops.rows() {
        flat.extend(perturb_crop(crops.row(r), &p.tile));
    }
    let hit = forward_batch(w, Matrix::from_raw(crops.rows(), CROP_LEN, flat))?;
    let mut changed = 0usize;
    for r in 0..crops.rows() {
        if crate::backbone::argmax(clean.probs.row(r)) != crate::backbone::argmax(hit.probs.row(r))
        {
            changed += 1;
        }
    }
    Ok(changed as f64 / crops.rows() as f64)
}
