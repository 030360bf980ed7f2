//! Weight checkpoint files: versioned JSON with named, shaped layers.
//!
//! One format serves both the backbone and the encoder. `f64` entries
//! round-trip bit-exactly, and serialization is deterministic, so retraining
//! with the same seed reproduces checkpoints byte-for-byte.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerEntry {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    layers: Vec<LayerEntry>,
}

/// Writes named matrices in order.
pub fn save_checkpoint(path: &Path, layers: &[(&str, &Matrix)]) -> Result<()> {
    let file = CheckpointFile {
        version: FORMAT_VERSION,
        layers: layers
            .iter()
            .map(|(name, m)| LayerEntry {
                name: (*name).to_string(),
                shape: [m.rows(), m.cols()],
                data: m.as_slice().to_vec(),
            })
            .collect(),
    };
    let out = File::create(path)?;
    let mut out = BufWriter::new(out);
    let text = serde_json::to_string(&file)
        .map_err(|e| Error::parse_msg(format!("checkpoint serialization failed: {e}")))?;
    out.write_all(text.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Reads a checkpoint and validates it against the expected layer schema
/// (names and shapes, in order). Returns matrices in schema order.
pub fn load_checkpoint(path: &Path, expected: &[(&str, (usize, usize))]) -> Result<Vec<Matrix>> {
    let file = File::open(path)?;
    let parsed: CheckpointFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::parse_msg(format!("bad checkpoint: {e}")))?;
    if parsed.version != FORMAT_VERSION {
        return Err(Error::Version {
            found: parsed.version,
            expected: FORMAT_VERSION,
        });
    }
    if parsed.layers.len() != expected.len() {
        return Err(Error::parse_msg(format!(
            "checkpoint has {} layers, expected {}",
            parsed.layers.len(),
            expected.len()
        )));
    }
    let mut out = Vec::with_capacity(expected.len());
    for (entry, (name, (rows, cols))) in parsed.layers.into_iter().zip(expected) {
        if entry.name != *name {
            return Err(Error::parse_msg(format!(
                "layer {:?} where {:?} was expected",
                entry.name, name
            )));
        }
        if entry.shape != [*rows, *cols] {
            return Err(Error::parse_msg(format!(
                "layer {:?} has shape {:?}, expected [{rows}, {cols}]",
                entry.name, entry.shape
            )));
        }
        // from_vec re-validates length and finiteness.
        out.push(Matrix::from_vec(*rows, *cols, entry.data)?);
    }
    Ok(out)
}
