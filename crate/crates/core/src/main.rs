use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mixlogit::cli::{exit_code, run, Command};

#[derive(Parser)]
#[command(name = "mixlogit", version, about = "Bayesian mixed logit estimation")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic replications
    Simulate(Common),
    /// Fit every configured model to every replication
    Fit(Common),
    /// Compute evaluation metrics for fitted models
    Evaluate(Common),
    /// Aggregate metrics across replications
    Report(Common),
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let (command, common) = match args.command {
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Fit(c) => (Command::Fit, c),
        Cmd::Evaluate(c) => (Command::Evaluate, c),
        Cmd::Report(c) => (Command::Report, c),
    };
    match run(command, &common.config, common.jobs, common.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
