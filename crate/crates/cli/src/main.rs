use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use epsdual_cli::{cmd_check, cmd_compare, cmd_reference, cmd_run, CliError, Options};

/// Distributed primal-dual ε-subgradient experiments.
#[derive(Debug, Parser)]
#[command(name = "epsdual", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output path (trace CSV for `run`, directory for `compare`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the iteration count from the config.
    #[arg(long, global = true)]
    iters: Option<usize>,
    /// Suppress informational output and warnings.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write its trace.
    Run { config: PathBuf },
    /// Check schedules, connectivity, diameter and the feasible set.
    Check { config: PathBuf },
    /// Compute the centralized optimum and a saddle point.
    Reference { config: PathBuf },
    /// Run two configs on the same problem and compare residuals.
    Compare { a: PathBuf, b: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let opts = Options {
        out: cli.out,
        iters: cli.iters,
        quiet: cli.quiet,
    };
    let mut stdout = io::stdout().lock();
    let result: Result<(), CliError> = match &cli.command {
        Command::Run { config } => cmd_run(config, &opts, &mut stdout),
        Command::Check { config } => cmd_check(config, &opts, &mut stdout),
        Command::Reference { config } => cmd_reference(config, &opts, &mut stdout),
        Command::Compare { a, b } => cmd_compare(a, b, &opts, &mut stdout),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
