//! Scene and dataset generation.

use super::types::{
    BBox, ContextModel, Dataset, GtObject, Image, Scene, SceneRecord, Split, IMAGE_SIDE,
};
use super::proposals::propose_regions;
use crate::error::{Error, Result};
use crate::numerics::RngState;
use crate::par;

/// Base gray level of the empty background.
const BACKGROUND_LEVEL: f64 = 0.30;
/// Standard deviation of the background texture noise.
const BACKGROUND_NOISE: f64 = 0.05;
/// Standard deviation of the per-instance pixel noise.
const INSTANCE_NOISE: f64 = 0.15;
/// Gray level of the occlusion strip drawn over each instance.
const OCCLUDER_LEVEL: f64 = 0.5;
/// Object side lengths are drawn uniformly from this range (inclusive).
const MIN_OBJECT_SIDE: usize = 10;
const MAX_OBJECT_SIDE: usize = 28;
/// Placement rejection budget per object.
const PLACEMENT_ATTEMPTS: usize = 100;
/// How many fresh streams `generate_dataset` tries per scene before giving up
/// on a pathologically unlucky index.
const SCENE_RETRIES: u64 = 16;

/// Per-category base color. The two confusable pairs (2, 6) and (3, 7) share
/// both color and glyph shape: their instances differ only by noise, so the
/// co-occurring categories are the only usable signal.
fn base_color(category: usize) -> [f64; 3] {
    match category {
        0 => [0.85, 0.15, 0.15],          // red square
        1 => [0.15, 0.80, 0.20],          // green disk
        2 | 6 => [0.10, 0.75, 0.80],      // cyan diamond (confusable pair)
        3 | 7 => [0.80, 0.15, 0.75],      // magenta triangle (confusable pair)
        4 => [0.15, 0.25, 0.85],          // blue plus
        5 => [0.85, 0.80, 0.15],          // yellow ring
        other => panic!("category {other} out of range"),
    }
}

/// Glyph mask in box-normalized coordinates `u, v ∈ [−1, 1]`.
fn glyph_mask(category: usize, u: f64, v: f64) -> bool {
    match category {
        0 => true,                                      // filled square
        1 => u * u + v * v <= 1.0,                      // disk
        2 | 6 => u.abs() + v.abs() <= 1.0,              // diamond
        3 | 7 => u.abs() <= (v + 1.0) / 2.0,            // triangle, apex up
        4 => u.abs() <= 0.35 || v.abs() <= 0.35,        // plus
        5 => {
            let r = (u * u + v * v).sqrt();
            (0.55..=1.0).contains(&r)                   // ring
        }
        other => panic!("category {other} out of range"),
    }
}

/// Draws one object instance: glyph, per-instance noise, occlusion strip.
fn render_instance(img: &mut Image, category: usize, b: &BBox, rng: &mut RngState) {
    let color = base_color(category);
    let (x0, y0) = (b.x as usize, b.y as usize);
    let (w, h) = (b.w as usize, b.h as usize);

    for py in y0..y0 + h {
        for px in x0..x0 + w {
            let u = ((px - x0) as f64 + 0.5) / w as f64 * 2.0 - 1.0;
            let v = ((py - y0) as f64 + 0.5) / h as f64 * 2.0 - 1.0;
            if glyph_mask(category, u, v) {
                for (c, &col) in color.iter().enumerate() {
                    img.set(px, py, c, col);
                }
            }
            // Instance noise covers the whole box, glyph and backdrop alike.
            for c in 0..3 {
                let noisy = img.get(px, py, c) + rng.normal_scaled(0.0, INSTANCE_NOISE);
                img.set(px, py, c, noisy);
            }
        }
    }

    // Occlusion strip: a flat bar across a random slice of the instance.
    let horizontal = rng.bernoulli(0.5);
    let extent = if horizontal { h } else { w };
    let thickness = rng.between(1, (extent / 5).max(1));
    let offset = rng.between(0, extent - thickness);
    for t in 0..thickness {
        if horizontal {
            let py = y0 + offset + t;
            for px in x0..x0 + w {
                for c in 0..3 {
                    img.set(px, py, c, OCCLUDER_LEVEL);
                }
            }
        } else {
            let px = x0 + offset + t;
            for py in y0..y0 + h {
                for c in 0..3 {
                    img.set(px, py, c, OCCLUDER_LEVEL);
                }
            }
        }
    }
}

/// Generates one scene from the context model.
///
/// Draw order is fixed (group, categories, placements, background, renders),
/// so a given `rng` always produces a bit-identical scene.
pub fn generate_scene(rng: &mut RngState, cm: &ContextModel) -> Result<Scene> {
    cm.validate()?;
    let group = rng.below(cm.groups.len());
    let count = rng.between(2, 5);

    // Categories: from the sampled group, each independently leaked to a
    // uniformly chosen out-of-group category.
    let out = cm.out_of_group(group);
    let mut categories = Vec::with_capacity(count);
    for _ in 0..count {
        let in_group = *rng.choose(&cm.groups[group]);
        if !out.is_empty() && rng.bernoulli(cm.leak_prob) {
            categories.push(*rng.choose(&out));
        } else {
            categories.push(in_group);
        }
    }

    // Placement: rejection-sample integer boxes with pairwise IoU < 0.3.
    let mut boxes: Vec<BBox> = Vec::with_capacity(count);
    for i in 0..count {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let w = rng.between(MIN_OBJECT_SIDE, MAX_OBJECT_SIDE);
            let h = rng.between(MIN_OBJECT_SIDE, MAX_OBJECT_SIDE);
            let x = rng.between(0, IMAGE_SIDE - w);
            let y = rng.between(0, IMAGE_SIDE - h);
            let cand = BBox::new(x as f64, y as f64, w as f64, h as f64);
            if boxes.iter().all(|b| b.iou(&cand) < 0.3) {
                boxes.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Generation(format!(
                "could not place object {i} of {count} after {PLACEMENT_ATTEMPTS} attempts"
            )));
        }
    }

    // Raster: background texture, then instances in placement order.
    let mut image = Image::filled(IMAGE_SIDE, BACKGROUND_LEVEL);
    for i in 0..image.data().len() {
        image.data_mut()[i] += rng.normal_scaled(0.0, BACKGROUND_NOISE);
    }
    let objects: Vec<GtObject> = categories
        .into_iter()
        .zip(boxes)
        .map(|(category, box_)| GtObject { category, box_ })
        .collect();
    for obj in &objects {
        render_instance(&mut image, obj.category, &obj.box_, rng);
    }
    image.clip_and_quantize();

    let scene = Scene {
        image,
        objects,
        context_group: group,
    };
    debug_assert!(scene.validate().is_ok());
    Ok(scene)
}

/// Generates a whole split: scenes plus their simulated proposals.
///
/// Scene `i` draws from `RngState::new(seed).split(i)` regardless of how the
/// work is scheduled, so the result is identical with and without the
/// `parallel` feature.
pub fn generate_dataset(seed: u64, n: usize, split: Split, cm: &ContextModel) -> Result<Dataset> {
    cm.validate()?;
    let root = RngState::new(seed);
    let records = par::ordered_map_indices(n, |i| generate_record(&root, i as u64, cm));
    collect_records(records, seed, split, cm, n)
}

/// Sequential twin of [`generate_dataset`] (benchmark baseline).
pub fn generate_dataset_seq(
    seed: u64,
    n: usize,
    split: Split,
    cm: &ContextModel,
) -> Result<Dataset> {
    cm.validate()?;
    let root = RngState::new(seed);
    let records = par::ordered_map_indices_seq(n, |i| generate_record(&root, i as u64, cm));
    collect_records(records, seed, split, cm, n)
}

fn generate_record(root: &RngState, index: u64, cm: &ContextModel) -> Result<SceneRecord> {
    let scene_stream = root.split(index);
    let mut last_err = None;
    for attempt in 0..SCENE_RETRIES {
        // Distinct sub-streams per attempt: generation errors advance to a
        // fresh, still-deterministic stream.
        let mut gen_rng = scene_stream.split(2 * attempt);
        match generate_scene(&mut gen_rng, cm) {
            Ok(scene) => {
                let mut prop_rng = scene_stream.split(2 * attempt + 1);
                let proposals = propose_regions(&scene, &mut prop_rng);
                return Ok(SceneRecord { scene, proposals });
            }
            Err(e @ Error::Generation(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Generation("scene generation failed".into())))
}

fn collect_records(
    records: Vec<Result<SceneRecord>>,
    seed: u64,
    split: Split,
    cm: &ContextModel,
    n: usize,
) -> Result<Dataset> {
    let mut scenes = Vec::with_capacity(n);
    for record in records {
        scenes.push(record?);
    }
    Ok(Dataset {
        scenes,
        split,
        seed,
        config_digest: config_digest(cm),
    })
}

/// Stable digest of the generation parameters, stored in the dataset so
/// downstream stages can detect mismatched artifacts.
pub(crate) fn config_digest(cm: &ContextModel) -> String {
    let canon = format!(
        "v1;groups={:?};leak={};pairs={:?};side={IMAGE_SIDE};sizes={MIN_OBJECT_SIDE}-{MAX_OBJECT_SIDE}",
        cm.groups, cm.leak_prob, cm.confusable_pairs
    );
    // FNV-1a, hex-encoded: cheap and stable across platforms.
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canon.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::NUM_CATEGORIES;

    #[test]
    fn no_leak_means_every_category_in_group() {
        let cm = ContextModel {
            leak_prob: 0.0,
            ..ContextModel::default()
        };
        for seed in 0..50 {
            let mut rng = RngState::new(seed);
            let scene = generate_scene(&mut rng, &cm).unwrap();
            for obj in &scene.objects {
                assert!(
                    cm.groups[scene.context_group].contains(&obj.category),
                    "category {} leaked out of group {}",
                    obj.category,
                    scene.context_group
                );
            }
        }
    }

    #[test]
    fn same_seed_gives_bit_identical_scene() {
        let cm = ContextModel::default();
        let a = generate_scene(&mut RngState::new(99), &cm).unwrap();
        let b = generate_scene(&mut RngState::new(99), &cm).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generated_scenes_satisfy_invariants() {
        let cm = ContextModel::default();
        for seed in 0..100 {
            let mut rng = RngState::new(seed);
            let scene = generate_scene(&mut rng, &cm).unwrap();
            scene.validate().unwrap();
            assert!((2..=5).contains(&scene.objects.len()));
        }
    }

    #[test]
    fn leak_fraction_matches_binomial_expectation() {
        // Monte-Carlo over many scenes: out-of-group fraction ≈ leak_prob.
        let cm = ContextModel::default();
        let ds = generate_dataset(1234, 10_000, Split::Train, &cm).unwrap();
        let mut total = 0usize;
        let mut leaked = 0usize;
        for rec in &ds.scenes {
            for obj in &rec.scene.objects {
                total += 1;
                if !cm.groups[rec.scene.context_group].contains(&obj.category) {
                    leaked += 1;
                }
            }
        }
        let fraction = leaked as f64 / total as f64;
        assert!(
            (fraction - 0.1).abs() <= 0.02,
            "out-of-group fraction {fraction} not within 0.1 ± 0.02"
        );
    }

    #[test]
    fn dataset_generation_is_deterministic_and_split_seeds_differ() {
        let cm = ContextModel::default();
        let a = generate_dataset(7, 12, Split::Train, &cm).unwrap();
        let b = generate_dataset(7, 12, Split::Train, &cm).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(8, 12, Split::Val, &cm).unwrap();
        assert_ne!(a.scenes[0], c.scenes[0]);
    }

    #[test]
    fn parallel_and_sequential_generation_agree() {
        let cm = ContextModel::default();
        let par = generate_dataset(3, 16, Split::Train, &cm).unwrap();
        let seq = generate_dataset_seq(3, 16, Split::Train, &cm).unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn context_signal_separates_confusable_pairs() {
        // The Bayes rule promised by the generator: classify a confusable
        // object purely from its co-occurring categories, using
        // group-conditional frequencies tabulated from the data itself.
        let cm = ContextModel::default();
        let ds = generate_dataset(42, 1500, Split::Train, &cm).unwrap();

        // Tabulate P(category | group) with Laplace smoothing.
        let g = cm.groups.len();
        let mut counts = vec![vec![1.0f64; NUM_CATEGORIES]; g];
        let mut group_counts = vec![1.0f64; g];
        for rec in &ds.scenes {
            group_counts[rec.scene.context_group] += 1.0;
            for obj in &rec.scene.objects {
                counts[rec.scene.context_group][obj.category] += 1.0;
            }
        }
        let cat_given_group: Vec<Vec<f64>> = counts
            .iter()
            .map(|row| {
                let sum: f64 = row.iter().sum();
                row.iter().map(|c| c / sum).collect()
            })
            .collect();
        let total_groups: f64 = group_counts.iter().sum();

        for &(a, b) in &cm.confusable_pairs {
            let (ga, gb) = (cm.group_of(a).unwrap(), cm.group_of(b).unwrap());
            let mut correct = 0usize;
            let mut seen = 0usize;
            for rec in &ds.scenes {
                for (i, obj) in rec.scene.objects.iter().enumerate() {
                    if obj.category != a && obj.category != b {
                        continue;
                    }
                    // Posterior over groups from the *other* objects only.
                    let mut log_post: Vec<f64> = group_counts
                        .iter()
                        .map(|c| (c / total_groups).ln())
                        .collect();
                    for (j, other) in rec.scene.objects.iter().enumerate() {
                        if i == j {
                            continue;
                        }
                        for (gi, lp) in log_post.iter_mut().enumerate() {
                            *lp += cat_given_group[gi][other.category].ln();
                        }
                    }
                    let predicted = if log_post[ga] >= log_post[gb] { a } else { b };
                    seen += 1;
                    if predicted == obj.category {
                        correct += 1;
                    }
                }
            }
            let acc = correct as f64 / seen as f64;
            assert!(
                acc > 0.8,
                "context Bayes accuracy for pair ({a}, {b}) is {acc:.3} over {seen} objects"
            );
        }
    }
}
