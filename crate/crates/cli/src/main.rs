//! `ham`: verification suites, gradient checks, data generation, training,
//! depth sweeps and evaluation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "ham", version, about = "Hierarchical attention experiments")]
pub struct Cli {
    /// Root seed; every random stream is derived from it
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON experiment config; flags override its keys
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Norm-bound, reduction and attention-identity suites
    Verify {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Finite-difference checks of every differentiable op
    Gradcheck {
        #[arg(long, value_enum)]
        scale: Option<ScaleArg>,
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Write a synthetic JSONL corpus
    Gendata {
        #[command(flatten)]
        task: TaskArgs,
        /// File name inside the output directory
        #[arg(long)]
        file: Option<String>,
    },
    /// Train one model and save a checkpoint
    Train {
        #[command(flatten)]
        task: TaskArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Train every depth with several restarts and compare best losses
    Sweep {
        #[command(flatten)]
        task: TaskArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Comma-separated ascending depths
        #[arg(long, value_delimiter = ',')]
        depths: Option<Vec<usize>>,
        #[arg(long)]
        restarts: Option<usize>,
        /// Record wall time in the CSV
        #[arg(long)]
        timing: bool,
    },
    /// Score generated sequences against a gold corpus
    Eval {
        #[arg(long)]
        gold: PathBuf,
        /// Corpus whose targets are the generations
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        generated: Option<PathBuf>,
        /// Checkpoint to decode the gold sources with
        #[arg(long)]
        model: Option<PathBuf>,
        /// Score consecutive four-line groups with averaged BLEU
        #[arg(long)]
        quatrains: bool,
    },
}

#[derive(Args, Debug, Default)]
pub struct TaskArgs {
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub payload_vocab: Option<usize>,
    /// Existing corpus file (replaces generation)
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, value_enum)]
    pub connector: Option<ConnectorArg>,
    /// Single-direction encoder
    #[arg(long)]
    pub unidirectional: bool,
    /// Keep level logits fixed, one-hot on the deepest level
    #[arg(long)]
    pub freeze_level_weights: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ScaleArg {
    Tiny,
    Small,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ConnectorArg {
    Ham,
    MultiLevel,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(CliError::Failed(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
