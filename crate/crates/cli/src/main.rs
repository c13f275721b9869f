//! `structmark`: runs the toy, synthetic-bench, label-smoothing and
//! evaluation experiments and writes their CSV/PGM artifacts.

mod commands;
mod config;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::commands::Common;
use crate::config::{RunConfig, CONFIG_HELP};

#[derive(Parser)]
#[command(name = "structmark", version, about, after_help = CONFIG_HELP)]
struct Cli {
    /// TOML config file; built-in defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Global seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write PGM images of intermediate heatmaps (smooth).
    #[arg(long, global = true)]
    dump_intermediates: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One-dimensional gradient-descent toy: structured loss vs soft-argmax.
    Toy {
        /// structured | softargmax
        #[arg(long)]
        objective: Option<String>,
    },
    /// Convergence comparison on the synthetic ellipse bench.
    Synth {
        /// Replaces the first arm's objective.
        #[arg(long)]
        objective: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Fits directional Gaussian labels to annotated landmarks.
    Smooth {
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        boundaries: Option<PathBuf>,
    },
    /// Scores predicted landmarks against ground truth (NME, FR, AUC).
    Eval {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    std::fs::create_dir_all(&cli.out).with_context(|| format!("cannot create `{}`", cli.out.display()))?;
    let common = Common {
        out: cli.out,
        dump_intermediates: cli.dump_intermediates,
    };
    match cli.command {
        Command::Toy { objective } => commands::toy(&cfg, &common, objective.as_deref()),
        Command::Synth { objective, epochs } => commands::synth(&cfg, &common, objective.as_deref(), epochs),
        Command::Smooth {
            annotations,
            boundaries,
        } => commands::smooth(&cfg, &common, annotations.as_deref(), boundaries.as_deref()),
        Command::Eval {
            predictions,
            ground_truth,
        } => commands::eval(&cfg, &common, predictions.as_deref(), ground_truth.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
