//! `matchlab`: dataset generation, oracle solving, training and evaluation
//! driven by a TOML config file and flags.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use matchlab::features::InputKind;
use serde::Serialize;

use config::{usage, FileConfig, UsageError};

#[derive(Parser)]
#[command(name = "matchlab", version, about = "Online bipartite matching laboratory")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; required here or in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for rollouts, solving and evaluation. Outputs do not
    /// depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a dataset described by a generator spec.
    Generate(GenerateFlags),
    /// Solve every instance of a dataset offline and fill the oracle cache.
    Solve(DatasetFlags),
    /// Train a neural policy.
    Train(TrainFlags),
    /// Optimality ratios of a policy on a dataset.
    Evaluate(PolicyFlags),
    /// Per-timestep agreement between a policy and a reference policy.
    Agreement(AgreementFlags),
    /// Mean ratio of one policy across graph sizes.
    Transfer(TransferFlags),
    /// Evaluate on a dataset and on a copy with relabelled fixed nodes.
    Permute(PolicyFlags),
    /// Fit a threshold baseline to a dataset and save it as a policy file.
    TuneBaseline(TuneFlags),
}

#[derive(Args, Serialize)]
struct GenerateFlags {
    /// Generator: er, ba, base_graph, adwords_template, adwords_random.
    #[arg(long)]
    kind: Option<String>,
    /// Edge probability (er, adwords_random) or mean degree (ba).
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    u_count: Option<usize>,
    #[arg(long)]
    v_count: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args, Serialize)]
struct DatasetFlags {
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct TrainFlags {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    val_dataset: Option<PathBuf>,
    /// Input kind: ff, ff-hist, inv-ff, inv-ff-hist.
    #[arg(long)]
    model: Option<InputKind>,
    /// reinforce or supervised.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Continue from the last checkpoint in the output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    resume: bool,
}

#[derive(Args, Serialize)]
struct PolicyFlags {
    /// greedy, random, msvv, oracle, or a policy/checkpoint file.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct AgreementFlags {
    #[arg(long)]
    policy: Option<String>,
    /// Policy compared against; defaults to the oracle.
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct TransferFlags {
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Args, Serialize)]
struct TuneFlags {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// greedy_t, greedy_rt_min or greedy_rt_max.
    #[arg(long)]
    baseline: Option<String>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let seed = cli
        .seed
        .or(file.seed)
        .ok_or_else(|| usage("a seed is required (--seed or `seed` in the config file)"))?;
    let out = cli
        .out
        .clone()
        .or_else(|| file.out.clone())
        .ok_or_else(|| usage("an output directory is required (--out or `out` in the config file)"))?;
    if let Some(n) = cli.workers.or(file.workers) {
        if n == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    std::fs::create_dir_all(&out)?;
    let ctx = commands::Context {
        seed,
        out,
        limits: file.limits,
    };
    match &cli.command {
        Command::Generate(f) => commands::generate(&ctx, &config::resolve(&file, "generate", f)?),
        Command::Solve(f) => commands::solve(&ctx, &config::resolve(&file, "solve", f)?),
        Command::Train(f) => commands::train(&ctx, &config::resolve(&file, "train", f)?),
        Command::Evaluate(f) => commands::evaluate(&ctx, &config::resolve(&file, "evaluate", f)?),
        Command::Agreement(f) => commands::agreement(&ctx, &config::resolve(&file, "agreement", f)?),
        Command::Transfer(f) => commands::transfer(&ctx, &config::resolve(&file, "transfer", f)?),
        Command::Permute(f) => commands::permute(&ctx, &config::resolve(&file, "permute", f)?),
        Command::TuneBaseline(f) => commands::tune_baseline(&ctx, &config::resolve(&file, "tune-baseline", f)?),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<matchlab::Error>() {
            return if e.is_user_error() { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
