//! Rescorer weight container, initialization, and checkpoint I/O.

use std::path::Path;

use crate::checkpoint;
use crate::error::Result;
use crate::numerics::{Matrix, RngState};
use crate::scg::ParamSchema;

use super::config::{EncoderConfig, TOKEN_DIM};

/// Weights of one encoder block: the four attention projections, the
/// feed-forward pair, and the two post-residual layer norms.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerWeights {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub ff1_w: Matrix,
    pub ff1_b: Matrix,
    pub ff2_w: Matrix,
    pub ff2_b: Matrix,
    pub ln1_g: Matrix,
    pub ln1_b: Matrix,
    pub ln2_g: Matrix,
    pub ln2_b: Matrix,
}

/// All trainable weights of the rescorer: input projection, encoder blocks,
/// output projection, and the two-layer classifier head. Weight matrices are
/// `(out × in)`, biases and layer-norm parameters are `(1 × width)` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TedmWeights {
    pub config: EncoderConfig,
    pub input_w: Matrix,
    pub input_b: Matrix,
    pub layers: Vec<EncoderLayerWeights>,
    pub out_w: Matrix,
    pub out_b: Matrix,
    pub cls1_w: Matrix,
    pub cls1_b: Matrix,
    pub cls2_w: Matrix,
    pub cls2_b: Matrix,
}

impl TedmWeights {
    /// Random initialization: Xavier-scaled projections, He-scaled ReLU
    /// feed-forward, unit layer-norm gains, zero biases.
    pub fn init(config: &EncoderConfig, rng: &mut RngState) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let xavier = |rng: &mut RngState, out: usize, inp: usize| {
            let sd = (1.0 / inp as f64).sqrt();
            Matrix::from_fn(out, inp, |_, _| rng.normal_scaled(0.0, sd))
        };
        let mut layers = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            let he_ff = (2.0 / d as f64).sqrt();
            let ff1_w = Matrix::from_fn(config.d_ff, d, |_, _| rng.normal_scaled(0.0, he_ff));
            let he_ff2 = (2.0 / config.d_ff as f64).sqrt();
            let ff2_w = Matrix::from_fn(d, config.d_ff, |_, _| rng.normal_scaled(0.0, he_ff2));
            layers.push(EncoderLayerWeights {
                wq: xavier(rng, d, d),
                wk: xavier(rng, d, d),
                wv: xavier(rng, d, d),
                wo: xavier(rng, d, d),
                ff1_w,
                ff1_b: Matrix::zeros(1, config.d_ff),
                ff2_w,
                ff2_b: Matrix::zeros(1, d),
                ln1_g: Matrix::from_fn(1, d, |_, _| 1.0),
                ln1_b: Matrix::zeros(1, d),
                ln2_g: Matrix::from_fn(1, d, |_, _| 1.0),
                ln2_b: Matrix::zeros(1, d),
            });
        }
        Ok(TedmWeights {
            input_w: xavier(rng, d, TOKEN_DIM),
            input_b: Matrix::zeros(1, d),
            layers,
            out_w: xavier(rng, config.d_out, d),
            out_b: Matrix::zeros(1, config.d_out),
            cls1_w: xavier(rng, config.hidden_units, config.d_out),
            cls1_b: Matrix::zeros(1, config.hidden_units),
            cls2_w: xavier(rng, config.classes, config.hidden_units),
            cls2_b: Matrix::zeros(1, config.classes),
            config: config.clone(),
        })
    }

    /// All-zero weights of the same architecture. Used as the gradient
    /// accumulator shape and, in tests, as a degenerate classifier whose
    /// output is uniform.
    pub fn zeros(config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let layers = (0..config.layers)
            .map(|_| EncoderLayerWeights {
                wq: Matrix::zeros(d, d),
                wk: Matrix::zeros(d, d),
                wv: Matrix::zeros(d, d),
                wo: Matrix::zeros(d, d),
                ff1_w: Matrix::zeros(config.d_ff, d),
                ff1_b: Matrix::zeros(1, config.d_ff),
                ff2_w: Matrix::zeros(d, config.d_ff),
                ff2_b: Matrix::zeros(1, d),
                ln1_g: Matrix::zeros(1, d),
                ln1_b: Matrix::zeros(1, d),
                ln2_g: Matrix::zeros(1, d),
                ln2_b: Matrix::zeros(1, d),
            })
            .collect();
        Ok(TedmWeights {
            config: config.clone(),
            input_w: Matrix::zeros(d, TOKEN_DIM),
            input_b: Matrix::zeros(1, d),
            layers,
            out_w: Matrix::zeros(config.d_out, d),
            out_b: Matrix::zeros(1, config.d_out),
            cls1_w: Matrix::zeros(config.hidden_units, config.d_out),
            cls1_b: Matrix::zeros(1, config.hidden_units),
            cls2_w: Matrix::zeros(config.classes, config.hidden_units),
            cls2_b: Matrix::zeros(1, config.classes),
        })
    }

    /// Documented flattening order shared by training, gradient checks, and
    /// checkpoints.
    pub fn schema(config: &EncoderConfig) -> ParamSchema {
        let d = config.d_model;
        let mut entries: Vec<(String, usize, usize)> = vec![
            ("input_w".into(), d, TOKEN_DIM),
            ("input_b".into(), 1, d),
        ];
        for l in 0..config.layers {
            for (suffix, r, c) in [
                ("wq", d, d),
                ("wk", d, d),
                ("wv", d, d),
                ("wo", d, d),
                ("ff1_w", config.d_ff, d),
                ("ff1_b", 1, config.d_ff),
                ("ff2_w", d, config.d_ff),
                ("ff2_b", 1, d),
                ("ln1_g", 1, d),
                ("ln1_b", 1, d),
                ("ln2_g", 1, d),
                ("ln2_b", 1, d),
            ] {
                entries.push((format!("l{l}_{suffix}"), r, c));
            }
        }
        entries.push(("out_w".into(), config.d_out, d));
        entries.push(("out_b".into(), 1, config.d_out));
        entries.push(("cls1_w".into(), config.hidden_units, config.d_out));
        entries.push(("cls1_b".into(), 1, config.hidden_units));
        entries.push(("cls2_w".into(), config.classes, config.hidden_units));
        entries.push(("cls2_b".into(), 1, config.classes));
        ParamSchema::new(entries)
    }

    /// Matrices in schema order.
    pub fn matrices(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.input_w, &self.input_b];
        for l in &self.layers {
            out.extend([
                &l.wq, &l.wk, &l.wv, &l.wo, &l.ff1_w, &l.ff1_b, &l.ff2_w, &l.ff2_b, &l.ln1_g,
                &l.ln1_b, &l.ln2_g, &l.ln2_b,
            ]);
        }
        out.extend([
            &self.out_w,
            &self.out_b,
            &self.cls1_w,
            &self.cls1_b,
            &self.cls2_w,
            &self.cls2_b,
        ]);
        out
    }

    pub fn to_flat(&self) -> Vec<f64> {
        Self::schema(&self.config)
            .flatten(&self.matrices())
            .expect("schema matches own matrices")
    }

    pub fn from_flat(config: &EncoderConfig, flat: &[f64]) -> Result<Self> {
        let mats = Self::schema(config).unflatten(flat)?;
        Ok(Self::from_matrices(config, mats))
    }

    fn from_matrices(config: &EncoderConfig, mats: Vec<Matrix>) -> Self {
        let mut it = mats.into_iter();
        let mut next = || it.next().expect("schema length already validated");
        let input_w = next();
        let input_b = next();
        let mut layers = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            layers.push(EncoderLayerWeights {
                wq: next(),
                wk: next(),
                wv: next(),
                wo: next(),
                ff1_w: next(),
                ff1_b: next(),
                ff2_w: next(),
                ff2_b: next(),
                ln1_g: next(),
                ln1_b: next(),
                ln2_g: next(),
                ln2_b: next(),
            });
        }
        TedmWeights {
            config: config.clone(),
            input_w,
            input_b,
            layers,
            out_w: next(),
            out_b: next(),
            cls1_w: next(),
            cls1_b: next(),
            cls2_w: next(),
            cls2_b: next(),
        }
    }

    /// Writes a checkpoint in the shared versioned-JSON layer format.
    pub fn save(&self, path: &Path) -> Result<()> {
        let schema = Self::schema(&self.config);
        let named: Vec<(&str, &Matrix)> = schema
            .entries()
            .iter()
            .map(|(name, _, _)| name.as_str())
            .zip(self.matrices())
            .collect();
        checkpoint::save_checkpoint(path, &named)
    }

    /// Loads a checkpoint, validating it against the given architecture.
    pub fn load(path: &Path, config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        let schema = Self::schema(config);
        let expected: Vec<(&str, (usize, usize))> = schema
            .entries()
            .iter()
            .map(|(name, r, c)| (name.as_str(), (*r, *c)))
            .collect();
        let mats = checkpoint::load_checkpoint(path, &expected)?;
        Ok(Self::from_matrices(config, mats))
    }
}
