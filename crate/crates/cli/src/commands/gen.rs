//! `ctxguard gen`: produce the train and val scene datasets.

use ctxguard_core::scenegen::{generate_dataset, save_dataset, Split};

use crate::artifacts::RunDir;
use crate::config::RunConfig;
use crate::CliError;

pub fn run(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let cm = cfg.dataset.context_model();
    let ds = &cfg.dataset;

    let train = generate_dataset(ds.train_seed(), ds.train_scenes, Split::Train, &cm)
        .map_err(CliError::from_compute)?;
    let val = generate_dataset(ds.val_seed(), ds.val_scenes, Split::Val, &cm)
        .map_err(CliError::from_compute)?;

    save_dataset(&train, &dir.train_set()).map_err(CliError::from_compute)?;
    save_dataset(&val, &dir.val_set()).map_err(CliError::from_compute)?;

    for (ds, path) in [(&train, dir.train_set()), (&val, dir.val_set())] {
        let objects: usize = ds.scenes.iter().map(|r| r.scene.objects.len()).sum();
        let proposals: usize = ds.scenes.iter().map(|r| r.proposals.len()).sum();
        println!(
            "wrote {} ({} scenes, {objects} objects, {proposals} proposals, seed {})",
            path.display(),
            ds.scenes.len(),
            ds.seed
        );
    }
    Ok(())
}
