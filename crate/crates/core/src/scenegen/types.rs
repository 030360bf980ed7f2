//! Domain types for scenes, boxes, context models, and datasets.

use crate::error::{Error, Result};

/// Number of foreground categories.
pub const NUM_CATEGORIES: usize = 8;
/// Index of the implicit background class (one past the last category).
pub const BACKGROUND: usize = NUM_CATEGORIES;
/// Classifier output width: all categories plus background.
pub const NUM_CLASSES: usize = NUM_CATEGORIES + 1;
/// Scene rasters are square with this side length.
pub const IMAGE_SIDE: usize = 64;
/// RGB.
pub const IMAGE_CHANNELS: usize = 3;

/// Axis-aligned box in pixel coordinates: `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Intersection-over-union; 0 for disjoint or degenerate boxes.
    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let iy = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Intersects the box with a `side`×`side` image.
    pub fn clamped(&self, side: f64) -> BBox {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.right().min(side);
        let y1 = self.bottom().min(side);
        BBox {
            x: x0,
            y: y0,
            w: (x1 - x0).max(0.0),
            h: (y1 - y0).max(0.0),
        }
    }

    /// Box-invariant check used on generated and loaded data.
    pub fn validate(&self, side: f64) -> Result<()> {
        let ok = self.x >= 0.0
            && self.y >= 0.0
            && self.right() <= side + 1e-9
            && self.bottom() <= side + 1e-9
            && self.w >= 4.0
            && self.h >= 4.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Geometry(format!(
                "box ({}, {}, {}, {}) violates bounds/size for side {side}",
                self.x, self.y, self.w, self.h
            )))
        }
    }

    /// `[x, y, w, h]`, the serialized form.
    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        BBox::new(a[0], a[1], a[2], a[3])
    }
}

/// A ground-truth object: category plus box.
#[derive(Debug, Clone, PartialEq)]
pub struct GtObject {
    pub category: usize,
    pub box_: BBox,
}

/// An RGB raster with values in `[0, 1]`, row-major `(y, x, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    side: usize,
    data: Vec<f64>,
}

impl Image {
    /// Uniform image filled with `value`.
    pub fn filled(side: usize, value: f64) -> Self {
        Image {
            side,
            data: vec![value; side * side * IMAGE_CHANNELS],
        }
    }

    pub fn from_data(side: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != side * side * IMAGE_CHANNELS {
            return Err(Error::Shape(format!(
                "image data length {} does not match {side}x{side}x{IMAGE_CHANNELS}",
                data.len()
            )));
        }
        Ok(Image { side, data })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.side + x) * IMAGE_CHANNELS + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.idx(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.idx(x, y, c);
        self.data[i] = v;
    }

    /// Clamps every value to `[0, 1]` and snaps it to the nearest 1/255 step.
    ///
    /// Generated scenes are quantized like this up front so that the
    /// integer-valued dataset file round-trips bit-for-bit.
    pub fn clip_and_quantize(&mut self) {
        for v in &mut self.data {
            *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
        }
    }
}

/// One synthetic scene: raster, ground truth, and the context group it was
/// drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: Image,
    pub objects: Vec<GtObject>,
    pub context_group: usize,
}

impl Scene {
    /// Checks the scene invariants (object count, box validity, pairwise
    /// overlap, pixel range).
    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() || self.objects.len() > 5 {
            return Err(Error::Consistency(format!(
                "scene has {} objects, expected 1..=5",
                self.objects.len()
            )));
        }
        let side = self.image.side() as f64;
        for obj in &self.objects {
            if obj.category >= NUM_CATEGORIES {
                return Err(Error::Consistency(format!(
                    "category {} out of range 0..{NUM_CATEGORIES}",
                    obj.category
                )));
            }
            obj.box_.validate(side)?;
        }
        for i in 0..self.objects.len() {
            for j in (i + 1)..self.objects.len() {
                let iou = self.objects[i].box_.iou(&self.objects[j].box_);
                if iou >= 0.3 {
                    return Err(Error::Consistency(format!(
                        "objects {i} and {j} overlap with IoU {iou:.3} >= 0.3"
                    )));
                }
            }
        }
        if self.image.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Consistency("pixel outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Category co-occurrence model: which categories form context groups, how
/// often a scene mixes groups, and which cross-group pairs are rendered
/// indistinguishably.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextModel {
    pub groups: Vec<Vec<usize>>,
    pub leak_prob: f64,
    pub confusable_pairs: Vec<(usize, usize)>,
}

impl Default for ContextModel {
    /// Two groups of four, two confusable cross-group pairs, 10% leak.
    fn default() -> Self {
        ContextModel {
            groups: vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]],
            leak_prob: 0.1,
            confusable_pairs: vec![(2, 6), (3, 7)],
        }
    }
}

impl ContextModel {
    /// Validates the model invariants: groups partition all categories, leak
    /// probability is a probability, and every confusable pair straddles two
    /// different groups.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; NUM_CATEGORIES];
        for group in &self.groups {
            for &cat in group {
                if cat >= NUM_CATEGORIES {
                    return Err(Error::Argument(format!(
                        "context group contains category {cat}, valid range is 0..{NUM_CATEGORIES}"
                    )));
                }
                if seen[cat] {
                    return Err(Error::Argument(format!(
                        "category {cat} appears in more than one context group"
                    )));
                }
                seen[cat] = true;
            }
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::Argument(
                "context groups do not cover all categories".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.leak_prob) {
            return Err(Error::Argument(format!(
                "leak_prob {} outside [0, 1]",
                self.leak_prob
            )));
        }
        for &(a, b) in &self.confusable_pairs {
            let ga = self.group_of(a);
            let gb = self.group_of(b);
            match (ga, gb) {
                (Some(ga), Some(gb)) if ga != gb => {}
                _ => {
                    return Err(Error::Argument(format!(
                        "confusable pair ({a}, {b}) must straddle two different groups"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Group index containing `category`, if any.
    pub fn group_of(&self, category: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&category))
    }

    /// All categories outside group `g`, in ascending order.
    pub fn out_of_group(&self, g: usize) -> Vec<usize> {
        (0..NUM_CATEGORIES)
            .filter(|c| !self.groups[g].contains(c))
            .collect()
    }

    /// True when `category` belongs to some confusable pair.
    pub fn is_confusable(&self, category: usize) -> bool {
        self.confusable_pairs
            .iter()
            .any(|&(a, b)| a == category || b == category)
    }
}

/// Train/validation split tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }

    pub fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            other => Err(Error::parse_msg(format!("unknown split {other:?}"))),
        }
    }
}

/// A scene together with the simulated detector proposals for it.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecord {
    pub scene: Scene,
    pub proposals: Vec<BBox>,
}

/// A generated, reproducible collection of scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scenes: Vec<SceneRecord>,
    pub split: Split,
    pub seed: u64,
    pub config_digest: String,
}
