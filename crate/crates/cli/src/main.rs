use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

use commands::Failure;

/// Buck converter steady-state analysis and switched simulation.
#[derive(Debug, Parser)]
#[command(name = "buckbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form steady state at the configured duty or output target.
    Analyze(RunArgs),
    /// Simulate to steady state; writes trace.csv and metrics.csv.
    Sim(RunArgs),
    /// Steady state over the grid in [sim]; writes sweep.csv.
    Sweep(RunArgs),
    /// Load step from [sim] step_from to step_to; writes step.csv and metrics.csv.
    Step(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override a config entry, e.g. `--set converter.Vi=4.2`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory for CSV files.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Analyze(a) => commands::analyze(&a.config, &a.overrides, &a.out),
        Command::Sim(a) => commands::sim(&a.config, &a.overrides, &a.out),
        Command::Sweep(a) => commands::sweep(&a.config, &a.overrides, &a.out),
        Command::Step(a) => commands::step(&a.config, &a.overrides, &a.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
