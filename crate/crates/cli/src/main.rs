//! `ctxguard`: drives the full context-rescoring pipeline from one config
//! file — dataset generation, backbone and rescorer training, universal
//! perturbation synthesis, the evaluation grid, and the comparison table.
//!
//! Exit codes: 0 success, 2 config error, 3 I/O error, 4 missing
//! prerequisite artifact, 5 internal consistency failure.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ctxguard_core::attacks::{ApplyMode, AttackKind};
use ctxguard_core::Error as CoreError;

use artifacts::RunDir;
use config::RunConfig;

/// Every way a subcommand can fail, tagged with its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable, malformed, or out-of-range configuration (exit 2).
    Config(String),
    /// Filesystem trouble: unwritable outputs, corrupt artifacts, held locks
    /// (exit 3).
    Io(String),
    /// A required artifact has not been produced yet (exit 4).
    Missing(String),
    /// The pipeline contradicted itself; indicates a bug, not user error
    /// (exit 5).
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Missing(_) => 4,
            CliError::Internal(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Missing(m) | CliError::Internal(m) => m,
        }
    }

    /// Classifies a pipeline error that escaped while computing (not while
    /// validating config): broken files and filesystem failures are I/O,
    /// cross-input disagreement is a consistency failure, anything else is
    /// an internal bug because the config was already validated.
    pub fn from_compute(e: CoreError) -> CliError {
        match e {
            CoreError::Io(_) | CoreError::Parse { .. } | CoreError::Version { .. } => {
                CliError::Io(e.to_string())
            }
            CoreError::Consistency(_) => CliError::Internal(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "ctxguard",
    version,
    about = "Context-rescoring detection pipeline: generate, train, attack, evaluate, compare"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run config JSON; `{}` selects all defaults.
    #[arg(long)]
    config: PathBuf,
    /// Override the base seed (re-derives all component seeds).
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Fff,
    Uap,
}

impl From<KindArg> for AttackKind {
    fn from(k: KindArg) -> AttackKind {
        match k {
            KindArg::Fff => AttackKind::Fff,
            KindArg::Uap => AttackKind::Uap,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Baseline,
    Tedm,
}

impl ModelArg {
    fn as_str(self) -> &'static str {
        match self {
            ModelArg::Baseline => "baseline",
            ModelArg::Tedm => "tedm",
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum AttackArg {
    None,
    Fff,
    Uap,
}

impl AttackArg {
    fn kind(self) -> Option<AttackKind> {
        match self {
            AttackArg::None => None,
            AttackArg::Fff => Some(AttackKind::Fff),
            AttackArg::Uap => Some(AttackKind::Uap),
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Whole,
    Region,
}

impl From<ModeArg> for ApplyMode {
    fn from(m: ModeArg) -> ApplyMode {
        match m {
            ModeArg::Whole => ApplyMode::Whole,
            ModeArg::Region => ApplyMode::Region,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train and val scene datasets.
    Gen(CommonArgs),
    /// Train the appearance backbone on the train split.
    TrainBackbone(CommonArgs),
    /// Train the attention rescorer against the frozen backbone.
    TrainTedm(CommonArgs),
    /// Synthesize a universal adversarial tile against the backbone.
    Attack {
        #[command(flatten)]
        common: CommonArgs,
        /// Which attack to synthesize.
        #[arg(long, value_enum)]
        kind: KindArg,
    },
    /// Evaluate one (model, attack, mode) condition on the val split.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Which detector's output to score.
        #[arg(long, value_enum)]
        model: ModelArg,
        /// Which perturbation to apply before detection.
        #[arg(long, value_enum, default_value = "none")]
        attack: AttackArg,
        /// How to apply the perturbation (defaults to whole when attacked).
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Print and save the rescorer-minus-baseline deltas per condition.
    Compare(CommonArgs),
}

/// Applies `CTXGUARD_THREADS` before any parallel work starts.
fn init_thread_cap() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("CTXGUARD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        CliError::Config(format!("CTXGUARD_THREADS must be a positive integer, got {raw:?}"))
    })?;
    if n == 0 {
        return Err(CliError::Config(
            "CTXGUARD_THREADS must be a positive integer, got 0".into(),
        ));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(format!("thread pool already configured: {e}")))
}

fn run() -> Result<(), CliError> {
    init_thread_cap()?;
    let cli = Cli::parse();

    let (common, action): (&CommonArgs, Box<dyn FnOnce(&RunConfig, &RunDir) -> Result<(), CliError>>) =
        match &cli.command {
            Command::Gen(c) => (c, Box::new(commands::gen::run)),
            Command::TrainBackbone(c) => (c, Box::new(commands::train::run_backbone)),
            Command::TrainTedm(c) => (c, Box::new(commands::train::run_tedm)),
            Command::Attack { common, kind } => {
                let kind: AttackKind = (*kind).into();
                (common, Box::new(move |cfg, dir| commands::attack::run(cfg, dir, kind)))
            }
            Command::Eval { common, model, attack, mode } => {
                let sel = commands::eval::Selection {
                    model: model.as_str(),
                    attack: attack.kind(),
                    mode: mode.map(ApplyMode::from),
                };
                (common, Box::new(move |cfg, dir| commands::eval::run(cfg, dir, sel)))
            }
            Command::Compare(c) => (c, Box::new(commands::compare::run)),
        };

    let mut config = RunConfig::load(&common.config)?;
    config.apply_overrides(common.seed, common.out.clone());
    let dir = RunDir::create(&config.out_dir)?;
    let _lock = dir.lock()?;
    action(&config, &dir)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
