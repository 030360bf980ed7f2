//! Rescorer hyper-parameters and the per-region token type.

use serde::{Deserialize, Serialize};

use crate::backbone::POOLED_DIM;
use crate::error::{Error, Result};
use crate::scenegen::NUM_CLASSES;

/// Width of one token before the input projection: pooled features plus the
/// normalized box.
pub const TOKEN_DIM: usize = POOLED_DIM + 4;

/// Architecture of the attention rescorer. All sizes are desk-scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Embedding width carried through the encoder blocks.
    pub d_model: usize,
    /// Number of encoder blocks.
    pub layers: usize,
    /// Attention heads per block; each head spans `d_model / heads` channels.
    pub heads: usize,
    /// Feed-forward hidden width inside each block.
    pub d_ff: usize,
    /// Width of the final encoder output projection.
    pub d_out: usize,
    /// Hidden units of the sigmoid layer in the classifier head.
    pub hidden_units: usize,
    /// Output classes (categories plus background).
    pub classes: usize,
    /// Longest region sequence the rescorer accepts.
    pub max_seq: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_model: 64,
            layers: 2,
            heads: 4,
            d_ff: 128,
            d_out: 32,
            hidden_units: 50,
            classes: NUM_CLASSES,
            max_seq: 16,
        }
    }
}

impl EncoderConfig {
    /// Checks structural invariants: everything positive and the heads
    /// partitioning the embedding exactly.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d_model", self.d_model),
            ("layers", self.layers),
            ("heads", self.heads),
            ("d_ff", self.d_ff),
            ("d_out", self.d_out),
            ("hidden_units", self.hidden_units),
            ("classes", self.classes),
            ("max_seq", self.max_seq),
        ] {
            if v == 0 {
                return Err(Error::Argument(format!("{name} must be positive")));
            }
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Argument(format!(
                "heads ({}) must divide d_model ({})",
                self.heads, self.d_model
            )));
        }
        Ok(())
    }

    /// Channels per attention head.
    pub fn d_k(&self) -> usize {
        self.d_model / self.heads
    }
}

/// One region as the rescorer sees it: pooled appearance features, the box
/// normalized to the unit square, and the region's index in its sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionToken {
    /// Mean-pooled feature-layer activations (length [`POOLED_DIM`]).
    pub pooled: Vec<f64>,
    /// `(cx, cy, w, h)` divided by the image side; all in `[0, 1]`.
    pub nbox: [f64; 4],
    /// Sequence index; must stay below the config's `max_seq`.
    pub position: usize,
}

impl RegionToken {
    pub fn validate(&self, cfg: &EncoderConfig) -> Result<()> {
        if self.pooled.len() != POOLED_DIM {
            return Err(Error::Shape(format!(
                "token pooled length {} (expected {POOLED_DIM})",
                self.pooled.len()
            )));
        }
        if let Some(v) = self
            .nbox
            .iter()
            .find(|v| !v.is_finite() || !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Argument(format!(
                "normalized box entry {v} outside [0, 1]"
            )));
        }
        if self.position >= cfg.max_seq {
            return Err(Error::Capacity {
                what: "token position",
                got: self.position,
                max: cfg.max_seq - 1,
            });
        }
        Ok(())
    }

    /// The flat input-projection row: pooled features then the box.
    pub(crate) fn input_row(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(TOKEN_DIM);
        row.extend_from_slice(&self.pooled);
        row.extend_from_slice(&self.nbox);
        row
    }
}
