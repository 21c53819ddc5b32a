//! Command-line entry point for the path-reasoning pipeline.
//!
//! Typical flow: `ingest` (or `synth`) builds the graph and task split,
//! then `pipeline` runs embed → train-sl → train-rl → extract → rank →
//! evaluate in order. Each stage can also be run individually against
//! the artifacts of a previous invocation with the same config.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};

mod config;
mod stages;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "kgpath", version, about = "Multi-hop relational path learning over knowledge graphs")]
struct Cli {
    /// Key-value run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the task relation from the config.
    #[arg(long, global = true)]
    task: Option<String>,
    /// Override the global seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Validate the configuration and exit without touching anything.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Build the inverse-closed graph and task split from a triple file.
    Ingest,
    /// Generate a synthetic planted-rule dataset instead of ingesting.
    Synth,
    /// Train translation embeddings on the ingested graph.
    Embed,
    /// Supervised policy bootstrap from teacher paths.
    TrainSl,
    /// Reward-shaped policy-gradient retraining.
    TrainRl,
    /// Export discovered formulas ordered by success count.
    Extract,
    /// Fit the linear re-ranker on training-pair features.
    Rank,
    /// Score the test split and write the metric report.
    Evaluate,
    /// Run embed through evaluate in sequence.
    Pipeline,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Synth => "synth",
            Command::Embed => "embed",
            Command::TrainSl => "train-sl",
            Command::TrainRl => "train-rl",
            Command::Extract => "extract",
            Command::Rank => "rank",
            Command::Evaluate => "evaluate",
            Command::Pipeline => "pipeline",
        }
    }

    fn needs_triples(self) -> bool {
        matches!(self, Command::Ingest)
    }

    fn run(self, cfg: &RunConfig) -> Result<()> {
        match self {
            Command::Ingest => stages::cmd_ingest(cfg),
            Command::Synth => stages::cmd_synth(cfg),
            Command::Embed => stages::cmd_embed(cfg),
            Command::TrainSl => stages::cmd_train_sl(cfg),
            Command::TrainRl => stages::cmd_train_rl(cfg),
            Command::Extract => stages::cmd_extract(cfg),
            Command::Rank => stages::cmd_rank(cfg),
            Command::Evaluate => stages::cmd_evaluate(cfg),
            Command::Pipeline => stages::cmd_pipeline(cfg),
        }
    }
}

fn prepare(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("--config <file> is required"))?;
    let mut cfg = RunConfig::from_file(path)?;
    cfg.apply_overrides(cli.task.as_deref(), cli.seed, cli.out.as_deref());
    cfg.validate(cli.command.needs_triples())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // Configuration problems (bad keys, missing input files) exit with
    // status 2 before any artifact is touched; stage failures exit 1.
    let cfg = match prepare(&cli) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("error: {err:#}");
            return ExitCode::from(2);
        }
    };
    if cli.dry_run {
        println!(
            "config ok: run {} would write to {}",
            cfg.hash_hex(),
            cfg.run_dir().display()
        );
        return ExitCode::SUCCESS;
    }
    match cli.command.run(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {} failed: {err:#}", cli.command.name());
            ExitCode::from(1)
        }
    }
}
