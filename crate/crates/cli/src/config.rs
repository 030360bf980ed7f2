//! The run configuration file: one strict JSON document for every subcommand.
//!
//! Every field has a default, so `{}` is a valid config; unknown keys are
//! rejected everywhere so a typo cannot silently fall back to a default. The
//! `--seed N` flag re-derives every component seed from one base (documented
//! on [`RunConfig::apply_overrides`]), and `--out DIR` replaces `out_dir`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ctxguard_core::backbone::BackboneTrainOptions;
use ctxguard_core::encoder::{EncoderConfig, TedmTrainOptions};
use ctxguard_core::eval::AucMode;
use ctxguard_core::scenegen::ContextModel;

use crate::CliError;

/// Scene-generation settings. The context model keeps its default group
/// structure; only the leak probability is exposed here.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub train_scenes: usize,
    pub val_scenes: usize,
    /// Probability that an object's category is drawn outside the scene's
    /// context group.
    pub leak_prob: f64,
    /// Base seed: the train split draws from `seed`, the val split from
    /// `seed + 1`.
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            train_scenes: 800,
            val_scenes: 200,
            leak_prob: 0.1,
            seed: 1,
        }
    }
}

impl DatasetConfig {
    pub fn context_model(&self) -> ContextModel {
        ContextModel {
            leak_prob: self.leak_prob,
            ..ContextModel::default()
        }
    }

    pub fn train_seed(&self) -> u64 {
        self.seed
    }

    pub fn val_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }
}

/// Perturbation-synthesis settings shared by both attacks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    /// L∞ budget of the 16×16×3 tile.
    pub epsilon: f64,
    /// Ascent iterations for the data-free attack.
    pub fff_iters: usize,
    /// Early-stop fooling rate for the data-dependent attack.
    pub uap_target_fool: f64,
    /// Epoch budget for the data-dependent attack.
    pub uap_max_epochs: usize,
    /// Seeds tile initialization (fff) and crop shuffling (uap).
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            epsilon: 0.06,
            fff_iters: 400,
            uap_target_fool: 0.8,
            uap_max_epochs: 5,
            seed: 5,
        }
    }
}

/// Metric settings.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// How per-category AUC is computed.
    pub auc_mode: AucMode,
}

/// Everything a run needs, in one file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Directory all artifacts are written to (created if missing).
    pub out_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub backbone: BackboneTrainOptions,
    pub encoder: EncoderConfig,
    pub tedm: TedmTrainOptions,
    pub attack: AttackConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("run"),
            dataset: DatasetConfig::default(),
            backbone: BackboneTrainOptions::default(),
            encoder: EncoderConfig::default(),
            tedm: TedmTrainOptions::default(),
            attack: AttackConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Loads and validates a config file. Every failure here is a config
    /// error (exit code 2).
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| {
            CliError::Config(format!("malformed config {}: {e}", path.display()))
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Applies command-line overrides. `--seed N` re-derives the component
    /// seeds as: dataset `N` (val split `N + 1`), backbone `N + 100`,
    /// rescorer `N + 200`, attack `N + 300`, so one flag moves the whole
    /// pipeline to a fresh stream.
    pub fn apply_overrides(&mut self, seed: Option<u64>, out: Option<PathBuf>) {
        if let Some(n) = seed {
            self.dataset.seed = n;
            self.backbone.seed = n.wrapping_add(100);
            self.tedm.seed = n.wrapping_add(200);
            self.attack.seed = n.wrapping_add(300);
        }
        if let Some(dir) = out {
            self.out_dir = dir;
        }
    }

    /// Value checks, mirroring what the pipeline stages enforce, so that a
    /// bad config fails with exit code 2 before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.dataset.train_scenes == 0 || self.dataset.val_scenes == 0 {
            return bad("dataset: scene counts must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.dataset.leak_prob) {
            return bad(format!(
                "dataset: leak_prob {} outside [0, 1]",
                self.dataset.leak_prob
            ));
        }
        let b = &self.backbone;
        if !(b.learning_rate > 0.0) || !b.learning_rate.is_finite() {
            return bad(format!("backbone: learning_rate {} must be positive", b.learning_rate));
        }
        if !(0.0..1.0).contains(&b.momentum) {
            return bad(format!("backbone: momentum {} outside [0, 1)", b.momentum));
        }
        if b.batch_size == 0 {
            return bad("backbone: batch_size must be positive".into());
        }
        self.encoder
            .validate()
            .map_err(|e| CliError::Config(format!("encoder: {e}")))?;
        let s = &self.tedm.scg;
        if !(s.sigma0 > 0.0) || !(s.lambda0 > 0.0) || !(s.grad_tol >= 0.0) {
            return bad("tedm.scg: sigma0 and lambda0 must be positive, grad_tol non-negative".into());
        }
        if s.max_iters == 0 {
            return bad("tedm.scg: max_iters must be positive".into());
        }
        let a = &self.attack;
        if !a.epsilon.is_finite() || a.epsilon < 0.0 {
            return bad(format!("attack: epsilon {} must be finite and non-negative", a.epsilon));
        }
        if !(a.uap_target_fool > 0.0 && a.uap_target_fool <= 1.0) {
            return bad(format!(
                "attack: uap_target_fool {} outside (0, 1]",
                a.uap_target_fool
            ));
        }
        if a.fff_iters == 0 || a.uap_max_epochs == 0 {
            return bad("attack: iteration and epoch budgets must be positive".into());
        }
        Ok(())
    }
}
