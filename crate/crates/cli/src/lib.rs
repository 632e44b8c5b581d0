//! Command-line pipeline: synthetic data, training, evaluation, prediction,
//! ablations and the horizon study, with self-describing run directories.

pub mod commands;
pub mod config;
pub mod error;
pub mod rundir;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "nap", version, about = "Non-autoregressive pedestrian trajectory forecasting")]
pub struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = ["full", "p", "iss", "isg", "isc"])]
    pub variant: Option<String>,
    /// Forecasts per pedestrian at evaluation and prediction time.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true, value_parser = ["8", "12"])]
    pub tpred: Option<String>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Extra `key=value` setting applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write seeded synthetic scenes into the data directory.
    Synth,
    /// Train one model per split plan.
    Train,
    /// Score checkpoints on their held-out scenes next to the baselines.
    Eval {
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        allow_train_eval: bool,
    },
    /// Forecast one pedestrian from an observed track file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        track: PathBuf,
        /// Pedestrian to forecast (default: smallest id in the file).
        #[arg(long)]
        ped: Option<i64>,
        /// Scene grid for the scene encoder (default: free space).
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Comma-separated 1-based steps, or `all`.
        #[arg(long, default_value = "all")]
        steps: String,
        #[arg(long)]
        heatmap: bool,
    },
    /// Train and compare the four reduced variants.
    Ablate,
    /// Compare error growth from 8 to 12 steps for NAP and the recurrent reference.
    IncrementStudy,
}

/// Config file, then `--set`, then the dedicated flags.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| nap_core::Error::io(p, e))?;
            RunConfig::from_text(&text)?
        }
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(v) = &cli.variant {
        cfg.model.variant = v.parse()?;
    }
    if let Some(k) = cli.k {
        cfg.eval_k = k;
    }
    if let Some(t) = &cli.tpred {
        cfg.model.t_pred = t.parse().expect("checked by clap");
    }
    cfg.resolve()
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let cfg = resolve_config(&cli)?;
    let tpred = cli.tpred.as_ref().map(|t| t.parse().expect("checked by clap"));
    match &cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Eval {
            checkpoints,
            allow_train_eval,
        } => commands::eval(&cfg, checkpoints, tpred, *allow_train_eval),
        Command::Predict {
            checkpoint,
            track,
            ped,
            grid,
            steps,
            heatmap,
        } => commands::predict(
            &cfg,
            &commands::PredictArgs {
                checkpoint,
                track,
                ped: *ped,
                grid: grid.as_deref(),
                steps,
                heatmap: *heatmap,
                tpred,
            },
        ),
        Command::Ablate => commands::ablate(&cfg),
        Command::IncrementStudy => commands::increment_study(&cfg),
    }
}
