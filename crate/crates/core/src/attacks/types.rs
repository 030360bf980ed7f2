//! Perturbation containers, synthesis reports, and their file format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::CROP_LEN;
use crate::error::{Error, Result};

/// Which synthesis produced a perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    /// Data-free activation saturation.
    Fff,
    /// Data-dependent universal perturbation.
    Uap,
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttackKind::Fff => write!(f, "fff"),
            AttackKind::Uap => write!(f, "uap"),
        }
    }
}

/// How a perturbation tile reaches a scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyMode {
    /// Tiled across the whole canvas before detection runs.
    Whole,
    /// Resized onto each region the detector proposed on the clean image.
    Region,
}

impl std::fmt::Display for ApplyMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ApplyMode::Whole => write!(f, "whole"),
            ApplyMode::Region => write!(f, "region"),
        }
    }
}

/// A universal adversarial pattern: one crop-sized tile applied to every
/// image or region, bounded in L∞ norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    /// Flattened 16×16×3 pattern, same layout as a region crop.
    pub tile: Vec<f64>,
    /// L∞ budget in pixel units.
    pub epsilon: f64,
    pub kind: AttackKind,
    /// Gradient steps the synthesis actually took.
    pub iters_used: usize,
}

impl Perturbation {
    /// The empty perturbation for a given budget.
    pub fn zero(epsilon: f64, kind: AttackKind) -> Self {
        Perturbation {
            tile: vec![0.0; CROP_LEN],
            epsilon,
            kind,
            iters_used: 0,
        }
    }

    /// Largest absolute tile entry.
    pub fn linf(&self) -> f64 {
        self.tile.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Enforces the type's invariants: tile shape, finiteness, and the L∞
    /// budget.
    pub fn validate(&self) -> Result<()> {
        if self.tile.len() != CROP_LEN {
            return Err(Error::Shape(format!(
                "perturbation tile has {} entries, expected {CROP_LEN}",
                self.tile.len()
            )));
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::Argument(format!(
                "perturbation budget must be finite and ≥ 0, got {}",
                self.epsilon
            )));
        }
        if self.tile.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("perturbation tile has non-finite entries".into()));
        }
        let linf = self.linf();
        if linf > self.epsilon {
            return Err(Error::Argument(format!(
                "tile exceeds its L∞ budget: {linf} > {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// What a synthesis run achieved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    /// Fooling rate on the labeled train crops. Data-free synthesis never
    /// sees crops, so it leaves this unset.
    pub fooling_rate: Option<f64>,
    /// Objective per iteration: the activation objective for data-free
    /// synthesis, the per-epoch fooling rate for the data-dependent one.
    pub objective_trace: Vec<f64>,
    pub epsilon: f64,
    pub kind: AttackKind,
    pub seed: u64,
}

/// On-disk schema: the tile plus the parameters needed to reproduce it. The
/// optimization trace lives in the report, not here, so a loaded perturbation
/// reports zero `iters_used`.
#[derive(Serialize, Deserialize)]
struct PerturbationFile {
    kind: AttackKind,
    epsilon: f64,
    tile: Vec<f64>,
    seed: u64,
}

/// Writes a perturbation (and the seed that produced it) as JSON.
pub fn save_perturbation(path: &Path, p: &Perturbation, seed: u64) -> Result<()> {
    p.validate()?;
    let file = PerturbationFile {
        kind: p.kind,
        epsilon: p.epsilon,
        tile: p.tile.clone(),
        seed,
    };
    let out = File::create(path)?;
    let mut out = BufWriter::new(out);
    let text = serde_json::to_string(&file)
        .map_err(|e| Error::parse_msg(format!("perturbation serialization failed: {e}")))?;
    out.write_all(text.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Reads a perturbation file, validating it. Returns the perturbation and the
/// recorded seed.
pub fn load_perturbation(path: &Path) -> Result<(Perturbation, u64)> {
    let file = File::open(path)?;
    let parsed: PerturbationFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::parse_msg(format!("bad perturbation file: {e}")))?;
    let p = Perturbation {
        tile: parsed.tile,
        epsilon: parsed.epsilon,
        kind: parsed.kind,
        iters_used: 0,
    };
    p.validate()?;
    Ok((p, parsed.seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip_is_bit_exact() {
        let mut p = Perturbation::zero(0.06, AttackKind::Uap);
        for (i, v) in p.tile.iter_mut().enumerate() {
            *v = 0.06 * ((i as f64 * 0.37).sin());
        }
        p.iters_used = 42;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        save_perturbation(&path, &p, 7).unwrap();
        let (loaded, seed) = load_perturbation(&path).unwrap();
        assert_eq!(seed, 7);
        assert_eq!(loaded.kind, AttackKind::Uap);
        assert_eq!(loaded.epsilon, 0.06);
        assert_eq!(loaded.iters_used, 0, "trace data is not persisted");
        for (a, b) in p.tile.iter().zip(&loaded.tile) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn validation_enforces_shape_and_budget() {
        let good = Perturbation::zero(0.05, AttackKind::Fff);
        good.validate().unwrap();

        let mut short = good.clone();
        short.tile.pop();
        assert!(matches!(short.validate(), Err(Error::Shape(_))));

        let mut over = good.clone();
        over.tile[0] = 0.0500001;
        assert!(matches!(over.validate(), Err(Error::Argument(_))));

        let mut nan = good.clone();
        nan.tile[3] = f64::NAN;
        assert!(matches!(nan.validate(), Err(Error::Numeric(_))));

        let mut neg = good;
        neg.epsilon = -0.1;
        assert!(matches!(neg.validate(), Err(Error::Argument(_))));
    }

    #[test]
    fn budget_violations_are_rejected_at_load_time() {
        let p = Perturbation {
            tile: vec![0.1; CROP_LEN],
            epsilon: 0.1,
            kind: AttackKind::Fff,
            iters_used: 0,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        save_perturbation(&path, &p, 0).unwrap();
        // Corrupt the budget below the stored tile.
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("\"epsilon\":0.1", "\"epsilon\":0.01")).unwrap();
        assert!(load_perturbation(&path).is_err());
    }
}
