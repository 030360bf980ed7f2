//! Artifact layout inside a run directory, prerequisite checks, and the
//! single-writer lock.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use ctxguard_core::attacks::AttackKind;

use crate::CliError;

/// Name of the lock file guarding a run directory.
pub const LOCK_FILE: &str = ".ctxguard.lock";

/// Resolves artifact paths inside one run directory.
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Creates the directory if needed and returns the handle. Failure to
    /// create is an I/O error (exit code 3).
    pub fn create(root: &Path) -> Result<RunDir, CliError> {
        fs::create_dir_all(root).map_err(|e| {
            CliError::Io(format!("cannot create output directory {}: {e}", root.display()))
        })?;
        Ok(RunDir { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn train_set(&self) -> PathBuf {
        self.root.join("train.jsonl")
    }

    pub fn val_set(&self) -> PathBuf {
        self.root.join("val.jsonl")
    }

    pub fn backbone(&self) -> PathBuf {
        self.root.join("backbone.json")
    }

    pub fn backbone_trace(&self) -> PathBuf {
        self.root.join("backbone_trace.csv")
    }

    pub fn tedm(&self) -> PathBuf {
        self.root.join("tedm.json")
    }

    pub fn tedm_trace(&self) -> PathBuf {
        self.root.join("tedm_trace.csv")
    }

    pub fn perturbation(&self, kind: AttackKind) -> PathBuf {
        self.root.join(format!("{kind}.json"))
    }

    pub fn attack_report(&self, kind: AttackKind) -> PathBuf {
        self.root.join(format!("{kind}_report.json"))
    }

    /// Report file for one evaluated condition, e.g.
    /// `eval_tedm_uap_region.json` or `eval_baseline_none.json`.
    pub fn eval_report(&self, model: &str, attack: &str, mode: &str) -> PathBuf {
        let name = if attack == "none" {
            format!("eval_{model}_none.json")
        } else {
            format!("eval_{model}_{attack}_{mode}.json")
        };
        self.root.join(name)
    }

    pub fn results_csv(&self) -> PathBuf {
        self.root.join("results.csv")
    }

    pub fn compare_csv(&self) -> PathBuf {
        self.root.join("compare.csv")
    }

    /// Checks a prerequisite artifact exists; the error names the file and
    /// the subcommand that produces it (exit code 4).
    pub fn require(&self, path: PathBuf, produced_by: &str) -> Result<PathBuf, CliError> {
        if path.is_file() {
            Ok(path)
        } else {
            Err(CliError::Missing(format!(
                "{} not found; run `ctxguard {produced_by}` first",
                path.display()
            )))
        }
    }

    /// Takes the run-directory lock. Held until the guard drops; a second
    /// concurrent invocation fails with an I/O error instead of corrupting
    /// the directory.
    pub fn lock(&self) -> Result<LockGuard, CliError> {
        let path = self.root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                // Contents are informational only; the file's existence is
                // the lock.
                let _ = writeln!(file, "pid {}", std::process::id());
                Ok(LockGuard { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Io(format!(
                "run directory {} is locked by another invocation ({} exists; \
                 delete it if that run has died)",
                self.root.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::Io(format!(
                "cannot create lock file {}: {e}",
                path.display()
            ))),
        }
    }
}

/// Removes the lock file when dropped.
pub struct LockGuard {
    path: PathBuf,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released_on_drop() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::create(dir.path()).unwrap();
        let guard = run.lock().unwrap();
        assert!(matches!(run.lock(), Err(CliError::Io(_))));
        drop(guard);
        let again = run.lock().unwrap();
        drop(again);
        assert!(!dir.path().join(LOCK_FILE).exists());
    }

    #[test]
    fn require_names_the_missing_file_and_the_producing_command() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::create(dir.path()).unwrap();
        let err = run.require(run.backbone(), "train-backbone").unwrap_err();
        match err {
            CliError::Missing(msg) => {
                assert!(msg.contains("backbone.json"), "{msg}");
                assert!(msg.contains("train-backbone"), "{msg}");
            }
            other => panic!("expected Missing, got {other:?}"),
        }
    }

    #[test]
    fn create_builds_nested_directories() {
        let dir = tempfile::tempdir().unwrap();
        let nested = dir.path().join("a/b/c");
        RunDir::create(&nested).unwrap();
        assert!(nested.is_dir());
    }
}
