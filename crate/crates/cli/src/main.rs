mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "seqbed",
    version,
    about = "Sequential Bayesian experimental design with soft actor-critic"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Agent checkpoint (eval, generalize).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `run.output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for evaluation; 1 gives bit-exact reruns.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write a checkpoint plus the training log.
    Train(Common),
    /// Evaluate a checkpoint with deterministic mean actions.
    Eval(Common),
    /// Evaluate the random policy.
    Baseline(Common),
    /// Sweep a prior parameter and report rewards relative to the trained value.
    Generalize(Common),
    /// Exact versus Monte Carlo information quantities on the toy model.
    Oracle(Common),
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        anyhow::bail!("--threads must be at least 1");
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let (name, common) = match &cli.command {
        Command::Train(c) => ("train", c),
        Command::Eval(c) => ("eval", c),
        Command::Baseline(c) => ("baseline", c),
        Command::Generalize(c) => ("generalize", c),
        Command::Oracle(c) => ("oracle", c),
    };
    set_threads(common.threads)?;
    let mut cfg = config::load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    let checkpoint = common.checkpoint.as_deref();
    match name {
        "train" => commands::cmd_train(&cfg),
        "eval" => commands::cmd_eval(&cfg, checkpoint),
        "baseline" => commands::cmd_baseline(&cfg),
        "generalize" => commands::cmd_generalize(&cfg, checkpoint),
        _ => commands::cmd_oracle(&cfg),
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
