// SPDX-License-Identifier: Apache-2.0

//! `curric`: corpus preparation, influence estimation, curriculum
//! compilation and analysis from one command.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use curriculum_core::Direction;

#[derive(Debug, Parser)]
#[command(name = "curric", version, about = "Influence-based curriculum toolkit")]
pub struct Cli {
    /// TOML pipeline config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory (default: config `out_dir`, else ./out).
    #[arg(long, global = true, env = "CURRIC_OUT_DIR")]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect or derive corpora.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Compute the influence matrix from gradient dumps.
    Influence(InfluenceArgs),
    /// Score documents with MATTR and unigram perplexity.
    Scores(ScoresArgs),
    /// Compile curricula into manifests and validate them.
    Build(BuildArgs),
    /// Compare manifests and loss logs.
    Analyze(AnalyzeArgs),
    /// Render SVG charts from an analysis report.
    Plot(PlotArgs),
    /// Print the effective config as TOML.
    Config,
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Load a corpus and print its statistics.
    Inspect {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Regroup text into fixed-length documents.
    Equitoken {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = curriculum_core::defaults::EQUITOKEN_LEN)]
        length: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Subsample to an equal word count per stage.
    Stratify {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        words_per_stage: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct InfluenceArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Directory of `*.gdmp` dumps.
    #[arg(long)]
    pub dumps: Option<PathBuf>,
    /// Average over all other documents instead of the whole set.
    #[arg(long)]
    pub exclude_self: bool,
    #[arg(long)]
    pub chunk_size: Option<usize>,
    /// Comma-separated per-checkpoint weights.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ScoresArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Strategy name (`C_E_desc`) or family (`C_E` with --direction).
    #[arg(long, required_unless_present = "all")]
    pub strategy: Option<String>,
    #[arg(long)]
    pub direction: Option<Direction>,
    /// Build all fourteen strategies with the shared seed.
    #[arg(long, conflicts_with = "strategy")]
    pub all: bool,
    /// Influence matrix (default: <out>/phi.bin).
    #[arg(long)]
    pub phi: Option<PathBuf>,
    /// Score table (default: <out>/scores.tsv).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Total word budget across epochs.
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub block_size: Option<usize>,
    #[arg(long)]
    pub segments: Option<usize>,
    #[arg(long)]
    pub keep_fraction: Option<f64>,
    #[arg(long)]
    pub epochs_per_stage: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// C_rand: reuse one shuffle for every pass.
    #[arg(long)]
    pub single_shuffle: bool,
    /// C_A: start from the lowest-influence segment.
    #[arg(long)]
    pub start_low: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Manifest files (`.cman`).
    #[arg(long, num_args = 1..)]
    pub manifests: Vec<PathBuf>,
    /// Timeline segments.
    #[arg(long)]
    pub segments: Option<usize>,
    /// Balance segments by document count instead of words.
    #[arg(long)]
    pub count_balanced: bool,
    /// Loss logs (`step loss` per line).
    #[arg(long, num_args = 1..)]
    pub loss: Vec<PathBuf>,
    /// Two-column files (`x y` per line) to rank-correlate.
    #[arg(long, num_args = 1..)]
    pub spearman: Vec<PathBuf>,
    #[arg(long)]
    pub no_jsd: bool,
    #[arg(long)]
    pub no_tau: bool,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Report written by `analyze` (default: <out>/report.json).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
