//! `necsuff`: train models, generate counterfactuals and attributions, and run
//! necessity/sufficiency, comparison and causal-oracle experiments.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 enumeration guard exceeded.

mod commands;
mod config;
mod report;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use necsuff_core::attribution::AttributionMethod;

use crate::commands::explain::ExplainArgs;
use crate::config::ExperimentConfig;
use crate::report::OutDir;

const DEFAULT_OUT: &str = "necsuff-out";

#[derive(Parser)]
#[command(name = "necsuff", version, about = "Necessity and sufficiency experiments for tabular explanations")]
struct Cli {
    /// Experiment config (JSON). Defaults to a built-in Independent2D setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-instance work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory; overrides the config's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train (or export the surrogate) and save the model file.
    Train,
    /// Counterfactuals and attributions for selected instances.
    Explain {
        /// Dataset row index; repeatable. Defaults to row 0.
        #[arg(long = "instance")]
        instances: Vec<usize>,
        /// An instance given as JSON, e.g. '{"x1": 1, "x2": 1}' or '[1, 1]'.
        #[arg(long)]
        point: Option<String>,
        #[arg(long, default_value_t = 4)]
        ncf: usize,
        /// `none`, `vary-only=<features>` or `freeze=<features>`.
        #[arg(long)]
        constraint: Option<String>,
        /// Comma-separated subset of LIME, SHAP, DiCE_FA, WachterCF_FA.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<AttributionMethod>>,
    },
    /// Necessity and sufficiency over rankers, protocols, nCF and CF methods.
    Necsuff,
    /// Per-instance and global attributions for every configured method.
    Attribution,
    /// Correlations and rank tests between attribution methods.
    Compare,
    /// Evaluate a causal query file (or a bundled query by name).
    Oracle {
        query: String,
    },
    /// Write the configured synthetic dataset as CSV plus a schema file.
    Synth {
        #[arg(long)]
        rows: Option<usize>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("cannot configure worker threads")?;
    }
    let config = load_config(&cli)?;
    let out_path = cli.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let out = OutDir::create(&out_path)?;
    match cli.command {
        Command::Train => commands::train::run(config, &out),
        Command::Explain {
            instances,
            point,
            ncf,
            constraint,
            methods,
        } => commands::explain::run(
            config,
            ExplainArgs {
                instances,
                point,
                ncf,
                constraint,
                methods,
            },
            &out,
        ),
        Command::Necsuff => commands::necsuff::run(config, &out),
        Command::Attribution => commands::attribution::run(config, &out),
        Command::Compare => commands::compare::run(config, &out),
        Command::Oracle { query } => commands::oracle::run(&query, &out),
        Command::Synth { rows } => commands::synth::run(config, rows, &out),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let guard = err
        .chain()
        .any(|e| matches!(e.downcast_ref::<necsuff_core::Error>(), Some(necsuff_core::Error::Guard { .. })));
    if guard {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NECSUFF_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
