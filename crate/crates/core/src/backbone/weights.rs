//! Backbone weight container, initialization, and checkpoint I/O.

use std::path::Path;

use crate::checkpoint;
use crate::error::Result;
use crate::numerics::{Matrix, RngState};
use crate::scenegen::NUM_CLASSES;
use crate::scg::ParamSchema;

/// Flattened crop length: 16×16×3.
pub const INPUT_DIM: usize = 768;
/// First hidden layer width.
pub const HIDDEN1_DIM: usize = 256;
/// Second hidden layer width — the "feature layer" exposed to the rescorer.
pub const FEATURE_DIM: usize = 128;

/// Dense weights of the three-layer appearance MLP. Weight matrices are
/// `(out × in)`, biases are `(1 × out)` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneWeights {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub w3: Matrix,
    pub b3: Matrix,
}

impl BackboneWeights {
    /// All-zero weights (uniform outputs; useful as a degenerate reference).
    pub fn zeros() -> Self {
        BackboneWeights {
            w1: Matrix::zeros(HIDDEN1_DIM, INPUT_DIM),
            b1: Matrix::zeros(1, HIDDEN1_DIM),
            w2: Matrix::zeros(FEATURE_DIM, HIDDEN1_DIM),
            b2: Matrix::zeros(1, FEATURE_DIM),
            w3: Matrix::zeros(NUM_CLASSES, FEATURE_DIM),
            b3: Matrix::zeros(1, NUM_CLASSES),
        }
    }

    /// He-normal initialization for the ReLU layers, Xavier for the logit
    /// layer, zero biases.
    pub fn init(rng: &mut RngState) -> Self {
        let he = |rng: &mut RngState, out: usize, inp: usize| {
            let sd = (2.0 / inp as f64).sqrt();
            Matrix::from_fn(out, inp, |_, _| rng.normal_scaled(0.0, sd))
        };
        let xavier = |rng: &mut RngState, out: usize, inp: usize| {
            let sd = (1.0 / inp as f64).sqrt();
            Matrix::from_fn(out, inp, |_, _| rng.normal_scaled(0.0, sd))
        };
        BackboneWeights {
            w1: he(rng, HIDDEN1_DIM, INPUT_DIM),
            b1: Matrix::zeros(1, HIDDEN1_DIM),
            w2: he(rng, FEATURE_DIM, HIDDEN1_DIM),
            b2: Matrix::zeros(1, FEATURE_DIM),
            w3: xavier(rng, NUM_CLASSES, FEATURE_DIM),
            b3: Matrix::zeros(1, NUM_CLASSES),
        }
    }

    /// The documented flattening order shared by training, gradient checks,
    /// and checkpoints.
    pub fn schema() -> ParamSchema {
        ParamSchema::new(vec![
            ("w1".into(), HIDDEN1_DIM, INPUT_DIM),
            ("b1".into(), 1, HIDDEN1_DIM),
            ("w2".into(), FEATURE_DIM, HIDDEN1_DIM),
            ("b2".into(), 1, FEATURE_DIM),
            ("w3".into(), NUM_CLASSES, FEATURE_DIM),
            ("b3".into(), 1, NUM_CLASSES),
        ])
    }

    /// Matrices in schema order.
    pub fn matrices(&self) -> Vec<&Matrix> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }

    pub fn to_flat(&self) -> Vec<f64> {
        Self::schema()
            .flatten(&self.matrices())
            .expect("schema matches own matrices")
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        let mut mats = Self::schema().unflatten(flat)?.into_iter();
        Ok(BackboneWeights {
            w1: mats.next().unwrap(),
            b1: mats.next().unwrap(),
            w2: mats.next().unwrap(),
            b2: mats.next().unwrap(),
            w3: mats.next().unwrap(),
            b3: mats.next().unwrap(),
        })
    }

    /// Writes a checkpoint (versioned JSON, bit-exact round trip).
    pub fn save(&self, path: &Path) -> Result<()> {
        let schema = Self::schema();
        let named: Vec<(&str, &Matrix)> = schema
            .entries()
            .iter()
            .map(|(name, _, _)| name.as_str())
            .zip(self.matrices())
            .collect();
        checkpoint::save_checkpoint(path, &named)
    }

    /// Loads and validates a checkpoint.
    pub fn load(path: &Path) -> Result<Self> {
        let schema = Self::schema();
        let expected: Vec<(&str, (usize, usize))> = schema
            .entries()
            .iter()
            .map(|(name, r, c)| (name.as_str(), (*r, *c)))
            .collect();
        let mut mats = checkpoint::load_checkpoint(path, &expected)?.into_iter();
        Ok(BackboneWeights {
            w1: mats.next().unwrap(),
            b1: mats.next().unwrap(),
            w2: mats.next().unwrap(),
            b2: mats.next().unwrap(),
            w3: mats.next().unwrap(),
            b3: mats.next().unwrap(),
        })
    }
}
