//! `adhoc-select`: simulate ad-hoc array scenes, train the joint
//! selection/enhancement network and run the evaluation harnesses.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::FixedK;
use config::RunConfig;
use error::{CliError, Result};

#[derive(Parser)]
#[command(name = "adhoc-select", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for scene-level parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Replace the contents of a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of multi-microphone scenes.
    Simulate {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        mics: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Directory of speech WAVs (default: synthetic speech).
        #[arg(long)]
        speech_dir: Option<PathBuf>,
        #[arg(long)]
        noise_dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        /// Aggregate exactly K microphones instead of halting adaptively.
        #[arg(long)]
        fixed_k: Option<usize>,
        /// Start from the weights of an existing checkpoint.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<u64>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint on every scene of a dataset.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train one model per (penalty, seed) and report cost against quality.
    Tradeoff {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated request penalties.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// Number of seeds per penalty.
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        lambda_scale: Option<f64>,
        /// Fine-tune penalized models from the same seed's unpenalized one.
        #[arg(long)]
        warm_start: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Compare an adaptive model with a fixed-K model per SNR bin.
    SnrSweep {
        #[arg(long)]
        data: PathBuf,
        /// Adaptive model checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Fixed-K checkpoint; alternatively use --match-k.
        #[arg(long, conflicts_with = "match_k")]
        fixed_k_model: Option<PathBuf>,
        /// `auto` or a number: derive the fixed-K model from the adaptive one.
        #[arg(long)]
        match_k: Option<String>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common, edit: impl FnOnce(&mut RunConfig)) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    edit(&mut cfg);
    cfg.validate()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build_global()
        .map_err(|e| CliError::usage(format!("cannot start worker pool: {e}")))?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            count,
            mics,
            out,
            speech_dir,
            noise_dir,
            common,
        } => {
            let cfg = resolve(&common, |c| {
                if let Some(m) = mics {
                    c.scene.mics = m;
                }
            })?;
            let args = commands::SimulateArgs {
                count,
                out,
                speech_dir,
                noise_dir,
                force: common.force,
            };
            commands::simulate(&cfg, &args)
        }
        Command::Train {
            data,
            out,
            lambda,
            fixed_k,
            init,
            max_steps,
            max_epochs,
            common,
        } => {
            let cfg = resolve(&common, |c| {
                if let Some(l) = lambda {
                    c.model.lambda = l;
                }
                if fixed_k.is_some() {
                    c.model.fixed_k = fixed_k;
                }
                if max_steps.is_some() {
                    c.train.max_steps = max_steps;
                }
                if let Some(e) = max_epochs {
                    c.train.max_epochs = e;
                }
            })?;
            let args = commands::TrainArgs {
                data,
                out,
                init,
                force: common.force,
            };
            commands::train_cmd(&cfg, &args)
        }
        Command::Evaluate {
            data,
            checkpoint,
            out,
            common,
        } => {
            let cfg = resolve(&common, |_| {})?;
            let args = commands::EvaluateArgs {
                data,
                checkpoint,
                out,
                force: common.force,
            };
            commands::evaluate(&cfg, &args)
        }
        Command::Tradeoff {
            data,
            out,
            lambdas,
            seeds,
            lambda_scale,
            warm_start,
            common,
        } => {
            let cfg = resolve(&common, |c| {
                if let Some(l) = lambdas {
                    c.experiment.lambdas = l;
                }
                if let Some(s) = seeds {
                    c.experiment.seeds = s;
                }
                if let Some(k) = lambda_scale {
                    c.experiment.lambda_scale = k;
                }
                c.experiment.warm_start |= warm_start;
            })?;
            let args = commands::TradeoffArgs {
                data,
                out,
                force: common.force,
            };
            commands::tradeoff(&cfg, &args)
        }
        Command::SnrSweep {
            data,
            model,
            fixed_k_model,
            match_k,
            bins,
            out,
            common,
        } => {
            let fixed_k = match (fixed_k_model, match_k.as_deref()) {
                (Some(dir), None) => FixedK::Checkpoint(dir),
                (None, Some("auto")) => FixedK::Auto,
                (None, Some(k)) => FixedK::K(
                    k.parse()
                        .ok()
                        .filter(|&k: &usize| k >= 1)
                        .ok_or_else(|| CliError::usage(format!("--match-k expects `auto` or a positive count, got `{k}`")))?,
                ),
                _ => return Err(CliError::usage("give either --fixed-k-model or --match-k")),
            };
            let cfg = resolve(&common, |c| {
                if let Some(b) = bins {
                    c.experiment.snr_bins = b;
                }
            })?;
            let args = commands::SnrSweepArgs {
                data,
                model,
                fixed_k,
                out,
                force: common.force,
            };
            commands::snr_sweep(&cfg, &args)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ADHOC_SELECT_LOG", "error")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
