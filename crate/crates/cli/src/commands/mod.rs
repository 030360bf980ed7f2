//! One module per subcommand, plus shared artifact loading.
//!
//! Loading follows a two-step protocol everywhere: [`RunDir::require`] turns
//! a missing file into exit code 4 with a hint naming the subcommand that
//! produces it, and only then is the file parsed, so a file that exists but
//! fails to load is an I/O error (exit code 3).

pub mod attack;
pub mod compare;
pub mod eval;
pub mod gen;
pub mod train;

use ctxguard_core::attacks::{load_perturbation, AttackKind, Perturbation};
use ctxguard_core::backbone::BackboneWeights;
use ctxguard_core::encoder::TedmWeights;
use ctxguard_core::scenegen::{load_dataset, Dataset};

use crate::artifacts::RunDir;
use crate::config::RunConfig;
use crate::CliError;

pub(crate) fn load_train_set(dir: &RunDir) -> Result<Dataset, CliError> {
    let path = dir.require(dir.train_set(), "gen")?;
    load_dataset(&path).map_err(CliError::from_compute)
}

pub(crate) fn load_val_set(dir: &RunDir) -> Result<Dataset, CliError> {
    let path = dir.require(dir.val_set(), "gen")?;
    load_dataset(&path).map_err(CliError::from_compute)
}

pub(crate) fn load_backbone(dir: &RunDir) -> Result<BackboneWeights, CliError> {
    let path = dir.require(dir.backbone(), "train-backbone")?;
    BackboneWeights::load(&path).map_err(CliError::from_compute)
}

pub(crate) fn load_tedm(cfg: &RunConfig, dir: &RunDir) -> Result<TedmWeights, CliError> {
    let path = dir.require(dir.tedm(), "train-tedm")?;
    TedmWeights::load(&path, &cfg.encoder).map_err(CliError::from_compute)
}

pub(crate) fn load_tile(dir: &RunDir, kind: AttackKind) -> Result<Perturbation, CliError> {
    let path = dir.require(dir.perturbation(kind), &format!("attack --kind {kind}"))?;
    let (p, _seed) = load_perturbation(&path).map_err(CliError::from_compute)?;
    Ok(p)
}

/// Writes a JSON value as a single line plus trailing newline, so artifact
/// bytes are reproducible.
pub(crate) fn write_json<T: serde::Serialize>(
    path: &std::path::Path,
    value: &T,
) -> Result<(), CliError> {
    let text = serde_json::to_string(value)
        .map_err(|e| CliError::Internal(format!("serialization failed: {e}")))?;
    std::fs::write(path, format!("{text}\n"))
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}
