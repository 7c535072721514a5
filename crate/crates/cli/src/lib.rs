//! Command-line front end for the `ehrjoint` library.

pub mod commands;
pub mod error;
pub mod manifest;
pub mod table;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ehrjoint::Method;

use crate::commands::{BenchmarkArgs, FitArgs, ReportArgs, SimulateArgs, ValidateArgs};
pub use crate::error::CliError;
use crate::error::EXIT_CODES_HELP;

#[derive(Debug, Parser)]
#[command(name = "ehrjoint", version, about = "Joint modeling of EHR visit, recording and outcome processes", after_help = EXIT_CODES_HELP)]
pub struct Cli {
    /// Worker threads for replications and bootstrap (default: all cores).
    #[arg(long, global = true, env = "EHRJOINT_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one simulated dataset.
    Simulate(SimulateCmd),
    /// Fit one method to a dataset.
    Fit(FitCmd),
    /// Run seeded replications over simulation cases.
    Benchmark(BenchmarkCmd),
    /// Check a dataset, config or design without fitting.
    Validate(ValidateCmd),
    /// Print the table of a finished benchmark.
    Report(ReportCmd),
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    /// Simulation config JSON.
    #[arg(long, conflicts_with = "case")]
    pub config: Option<PathBuf>,
    /// Case id with default settings, e.g. 2-3.
    #[arg(long)]
    pub case: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct FitCmd {
    /// Directory with baselines.csv and events.csv.
    #[arg(long)]
    pub data: PathBuf,
    /// Design JSON naming the covariates of each model block.
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    #[arg(long)]
    pub out: PathBuf,
    /// Bootstrap resamples (at least 50).
    #[arg(long)]
    pub boot: Option<usize>,
    /// Bootstrap seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BenchmarkCmd {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateCmd {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub design: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportCmd {
    /// Benchmark output directory.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "A")]
    pub coefficient: String,
    /// Print CSV instead of the aligned table.
    #[arg(long)]
    pub csv: bool,
}

/// Runs one parsed command; text destined for stdout is printed here.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let threads = match cli.threads {
        Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
        Some(t) => t,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(c) => {
            let m = commands::simulate(&SimulateArgs {
                config: c.config,
                case: c.case,
                out: c.out,
            })?;
            println!("wrote {} files (seed {})", m.outputs.len(), m.seed.unwrap_or_default());
        }
        Command::Fit(c) => {
            let m = commands::fit(&FitArgs {
                data: c.data,
                design: c.design,
                method: c.method,
                out: c.out,
                boot: c.boot,
                seed: c.seed,
            })?;
            println!("wrote {} files", m.outputs.len());
        }
        Command::Benchmark(c) => {
            let m = commands::benchmark(&BenchmarkArgs {
                config: c.config,
                out: c.out,
            })?;
            println!("wrote {} files in {:.1} s", m.outputs.len(), m.wall_clock_seconds);
        }
        Command::Validate(c) => {
            print!(
                "{}",
                commands::validate(&ValidateArgs {
                    data: c.data,
                    config: c.config,
                    design: c.design,
                })?
            );
        }
        Command::Report(c) => {
            print!(
                "{}",
                commands::report(&ReportArgs {
                    input: c.input,
                    coefficient: c.coefficient,
                    csv: c.csv,
                })?
            );
        }
    }
    Ok(())
}
