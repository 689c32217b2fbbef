use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use pdmdp::harness::{run_with_threads, ExperimentConfig, Subcommand};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// Exact (or dense-grid) optimal value at the start state.
    Oracle,
    /// Backward regression pass with per-stage diagnostics.
    Primal,
    /// Penalty fit and zero-mean audit.
    Dual,
    /// Lower and upper estimates with the duality gap.
    Bound,
    /// Doubling N = M sweep written as CSV.
    Ladder,
    /// Uniform-in-parameter error probe written as CSV.
    UniformError,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Oracle => Subcommand::Oracle,
            Command::Primal => Subcommand::Primal,
            Command::Dual => Subcommand::Dual,
            Command::Bound => Subcommand::Bound,
            Command::Ladder => Subcommand::Ladder,
            Command::UniformError => Subcommand::UniformError,
        }
    }
}

/// Primal-dual regression bounds for finite-horizon MDPs.
#[derive(Debug, Parser)]
#[command(name = "pdmdp", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed_primal: Option<u64>,
    #[arg(long)]
    seed_dual: Option<u64>,
    #[arg(long)]
    seed_test: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = ExperimentConfig::load(&cli.config).and_then(|mut cfg| {
        if let Some(s) = cli.seed_primal {
            cfg.seeds.primal = s;
        }
        if let Some(s) = cli.seed_dual {
            cfg.seeds.dual = s;
        }
        if let Some(s) = cli.seed_test {
            cfg.seeds.test = s;
        }
        run_with_threads(&cfg, cli.command.into(), &cli.out, cli.threads)
    });
    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for p in &outcome.artifacts {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
