//! `gisr`: synthesize data, train, evaluate and run the unfolded network.
//!
//! Settings are resolved in this order, later wins: built-in defaults, the
//! JSON file given by `--config`, the `GISR_SEED` environment variable (seed
//! only), then command-line flags.
//!
//! Exit codes: 0 success, 1 bad input (arguments, files, shapes), 2 numeric
//! failure (divergence, failed gradient checks).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod export;

#[derive(Debug, Parser)]
#[command(
    name = "gisr",
    version,
    about = "Guided image super-resolution with a memory-augmented unfolded network"
)]
struct Cli {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for data, initialization and shuffling.
    #[arg(long, global = true, env = "GISR_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic guided dataset.
    Synth(SynthArgs),
    /// Train a model; writes best.gisr, last.gisr, log.csv and config.json.
    Train(TrainArgs),
    /// Per-image metrics of a checkpoint next to the bicubic baseline.
    Eval(EvalArgs),
    /// Super-resolve one input and export PNGs.
    Infer(InferArgs),
    /// Finite-difference gradient checks of every operator and stage.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output dataset container (defaults to paths.dataset).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<usize>,
    /// Ground-truth side length.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    ratio: Option<usize>,
    #[arg(long)]
    bands: Option<usize>,
    #[arg(long)]
    guide_bands: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Number of unfolded stages K.
    #[arg(long)]
    stages: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Disable the ConvLSTM memory (ablation).
    #[arg(long)]
    no_memory: bool,
    /// Disable the cross-modality non-local module (ablation).
    #[arg(long)]
    no_cnl: bool,
    #[arg(long, value_enum, default_value = "f32")]
    precision: Precision,
    /// Continue from a last.gisr checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Split {
    All,
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Which part of the 7:2:1 split to score.
    #[arg(long, value_enum, default_value = "all")]
    split: Split,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Take L, P and H from pair `--index` of a dataset container.
    #[arg(long, conflicts_with_all = ["lr", "guide", "gt"])]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Low-resolution target, PNG or single-tensor container.
    #[arg(long, requires = "guide")]
    lr: Option<PathBuf>,
    /// High-resolution guidance, PNG or single-tensor container.
    #[arg(long, requires = "lr")]
    guide: Option<PathBuf>,
    /// Optional ground truth; enables the residual map.
    #[arg(long, requires = "lr")]
    gt: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Run a single check by name.
    #[arg(long)]
    op: Option<String>,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
enum CliError {
    User(String),
    Numeric(String),
}

impl From<gisr_core::CoreError> for CliError {
    fn from(e: gisr_core::CoreError) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::User(e.to_string())
        }
    }
}

impl From<gisr_tensor::TensorError> for CliError {
    fn from(e: gisr_tensor::TensorError) -> Self {
        gisr_core::CoreError::from(e).into()
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::User(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Numeric(m)) => {
            eprintln!("numeric failure: {m}");
            ExitCode::from(2)
        }
    }
}
