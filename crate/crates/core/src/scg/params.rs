//! Flattening structured weights into the single vector the optimizer works
//! on, and back.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Ordered list of named matrix shapes — the documented layout of a flattened
/// parameter vector. Flattening concatenates each matrix's row-major entries
/// in schema order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSchema {
    entries: Vec<(String, usize, usize)>,
}

impl ParamSchema {
    pub fn new(entries: Vec<(String, usize, usize)>) -> Self {
        ParamSchema { entries }
    }

    /// Total number of scalars across all entries.
    pub fn len(&self) -> usize {
        self.entries.iter().map(|(_, r, c)| r * c).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(name, rows, cols)` triples in flattening order.
    pub fn entries(&self) -> &[(String, usize, usize)] {
        &self.entries
    }

    /// Concatenates matrices into one flat vector, validating each shape
    /// against the schema.
    pub fn flatten(&self, mats: &[&Matrix]) -> Result<Vec<f64>> {
        if mats.len() != self.entries.len() {
            return Err(Error::Shape(format!(
                "flatten got {} matrices for a schema of {}",
                mats.len(),
                self.entries.len()
            )));
        }
        let mut flat = Vec::with_capacity(self.len());
        for (m, (name, r, c)) in mats.iter().zip(&self.entries) {
            if m.shape() != (*r, *c) {
                return Err(Error::Shape(format!(
                    "entry {name:?} has shape {:?}, schema says ({r}, {c})",
                    m.shape()
                )));
            }
            flat.extend_from_slice(m.as_slice());
        }
        Ok(flat)
    }

    /// Splits a flat vector back into matrices in schema order.
    pub fn unflatten(&self, flat: &[f64]) -> Result<Vec<Matrix>> {
        if flat.len() != self.len() {
            return Err(Error::Shape(format!(
                "flat vector has length {}, schema expects {}",
                flat.len(),
                self.len()
            )));
        }
        let mut out = Vec::with_capacity(self.entries.len());
        let mut offset = 0;
        for (_, r, c) in &self.entries {
            let n = r * c;
            out.push(Matrix::from_raw(*r, *c, flat[offset..offset + n].to_vec()));
            offset += n;
        }
        Ok(out)
    }

    /// Flat-vector offset of entry `index`'s first scalar; used to audit that
    /// a flat position maps back to the matrix entry it came from.
    pub fn offset_of(&self, index: usize) -> usize {
        self.entries[..index].iter().map(|(_, r, c)| r * c).sum()
    }
}
