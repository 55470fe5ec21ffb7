//! Batch front-end: sweeps scenarios, runs the selected models and solvers
//! and emits CSV tables. Every flag can also be set through a
//! `FLEXIGRID_*` environment variable; flags win.

mod commands;
mod output;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "flexigrid",
    about = "Blocking probabilities for a two-service flexi-grid optical link",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detailed and reduced state-space sizes for each (m1, n2) pair.
    Sizes(SizesArgs),
    /// Compute blocking probabilities for the selected models and solvers.
    Run(RunArgs),
    /// Irreducibility / ergodicity reports for the selected models.
    Check(CheckArgs),
    /// Exact-vs-bounds enclosure analysis on desk-scale scenarios.
    Enclosure(EnclosureArgs),
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Number of type 1 channels (comma-separated list).
    #[arg(long, value_delimiter = ',', required = true, env = "FLEXIGRID_M1")]
    m1: Vec<u32>,
    /// Channels per superchannel (comma-separated list).
    #[arg(long, value_delimiter = ',', required = true, env = "FLEXIGRID_N2")]
    n2: Vec<u32>,
}

#[derive(Debug, Args)]
struct SizesArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// Output file (stdout when absent).
    #[arg(long, env = "FLEXIGRID_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Model {
    #[value(name = "exact-RA")]
    ExactRa,
    #[value(name = "exact-LF")]
    ExactLf,
    #[value(name = "exact-MF")]
    ExactMf,
    #[value(name = "approx-RA")]
    ApproxRa,
    #[value(name = "approx-LM")]
    ApproxLm,
    #[value(name = "imprecise-RA")]
    ImpreciseRa,
    #[value(name = "imprecise-LM")]
    ImpreciseLm,
    #[value(name = "imprecise-PI")]
    ImprecisePi,
}

impl Model {
    fn is_exact(&self) -> bool {
        matches!(self, Model::ExactRa | Model::ExactLf | Model::ExactMf)
    }

    fn policy_label(&self) -> &'static str {
        match self {
            Model::ExactRa | Model::ApproxRa | Model::ImpreciseRa => "RA",
            Model::ExactLf => "LF",
            Model::ExactMf => "MF",
            Model::ApproxLm | Model::ImpreciseLm => "LM",
            Model::ImprecisePi => "PI",
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Model::ExactRa => "exact-RA",
            Model::ExactLf => "exact-LF",
            Model::ExactMf => "exact-MF",
            Model::ApproxRa => "approx-RA",
            Model::ApproxLm => "approx-LM",
            Model::ImpreciseRa => "imprecise-RA",
            Model::ImpreciseLm => "imprecise-LM",
            Model::ImprecisePi => "imprecise-PI",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solver {
    #[value(name = "iterate")]
    Iterate,
    #[value(name = "linear")]
    Linear,
    #[value(name = "simulate")]
    Simulate,
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Solver::Iterate => "iterate",
            Solver::Linear => "linear",
            Solver::Simulate => "simulate",
        })
    }
}

const ALL_MODELS: [Model; 8] = [
    Model::ExactRa,
    Model::ExactLf,
    Model::ExactMf,
    Model::ApproxRa,
    Model::ApproxLm,
    Model::ImpreciseRa,
    Model::ImpreciseLm,
    Model::ImprecisePi,
];

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// Traffic loads (comma-separated list); sets lambda1 = lambda2 = rho
    /// with unit service rates.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0], env = "FLEXIGRID_RHO")]
    rho: Vec<f64>,
    /// Models to run.
    #[arg(
        long,
        value_delimiter = ',',
        ignore_case = true,
        default_values_t = ALL_MODELS,
        env = "FLEXIGRID_MODELS"
    )]
    models: Vec<Model>,
    /// Solvers to apply (imprecise models always use iterate).
    #[arg(
        long,
        value_delimiter = ',',
        ignore_case = true,
        default_values_t = [Solver::Iterate, Solver::Linear],
        env = "FLEXIGRID_SOLVERS"
    )]
    solvers: Vec<Solver>,
    /// Iteration time step override (default: 0.9/||Q|| precise,
    /// 1/(2||Q||) imprecise).
    #[arg(long, env = "FLEXIGRID_DELTA")]
    delta: Option<f64>,
    /// Relative tolerance for iteration and simulation stopping rules.
    #[arg(long, default_value_t = 1e-3, env = "FLEXIGRID_PHI")]
    phi: f64,
    /// Iteration cap.
    #[arg(long, default_value_t = 1_000_000, env = "FLEXIGRID_MAX_ITERS")]
    max_iters: u64,
    /// Simulation seed.
    #[arg(long, default_value_t = 0, env = "FLEXIGRID_SEED")]
    seed: u64,
    /// Arrivals per simulation batch.
    #[arg(long, default_value_t = 100_000, env = "FLEXIGRID_BATCH_ARRIVALS")]
    batch_arrivals: u64,
    #[arg(long, default_value_t = 5, env = "FLEXIGRID_MIN_BATCHES")]
    min_batches: u32,
    #[arg(long, default_value_t = 50, env = "FLEXIGRID_MAX_BATCHES")]
    max_batches: u32,
    /// Output file (stdout when absent).
    #[arg(long, env = "FLEXIGRID_OUT")]
    out: Option<PathBuf>,
    /// Exact models are rejected when the detailed space exceeds this.
    #[arg(long, default_value_t = 1_000_000, env = "FLEXIGRID_STATE_CAP")]
    state_cap: u128,
    /// Run units in parallel (rows are still flushed in spec order).
    #[arg(long, env = "FLEXIGRID_PARALLEL")]
    parallel: bool,
    /// Fill the elapsed_seconds column (makes output non-deterministic).
    #[arg(long, env = "FLEXIGRID_TIMINGS")]
    timings: bool,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0], env = "FLEXIGRID_RHO")]
    rho: Vec<f64>,
    #[arg(
        long,
        value_delimiter = ',',
        ignore_case = true,
        default_values_t = ALL_MODELS,
        env = "FLEXIGRID_MODELS"
    )]
    models: Vec<Model>,
    #[arg(long, env = "FLEXIGRID_OUT")]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000, env = "FLEXIGRID_STATE_CAP")]
    state_cap: u128,
}

#[derive(Debug, Args)]
struct EnclosureArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0], env = "FLEXIGRID_RHO")]
    rho: Vec<f64>,
    /// Solver tolerance used for the bounds and the enclosure slack.
    #[arg(long, default_value_t = 1e-3, env = "FLEXIGRID_PHI")]
    phi: f64,
    #[arg(long, env = "FLEXIGRID_OUT")]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000, env = "FLEXIGRID_STATE_CAP")]
    state_cap: u128,
}

fn open_out(path: &Option<PathBuf>) -> std::io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn main() {
    let cli = Cli::parse();
    let outcome = (|| -> std::io::Result<commands::CommandOutcome> {
        match &cli.command {
            Command::Sizes(args) => {
                let mut out = open_out(&args.out)?;
                let outcome = commands::sizes(args, out.as_mut())?;
                out.flush()?;
                Ok(outcome)
            }
            Command::Run(args) => {
                let mut out = open_out(&args.out)?;
                let outcome = commands::run(args, out.as_mut())?;
                out.flush()?;
                Ok(outcome)
            }
            Command::Check(args) => {
                let mut out = open_out(&args.out)?;
                let outcome = commands::check(args, out.as_mut())?;
                out.flush()?;
                Ok(outcome)
            }
            Command::Enclosure(args) => {
                let mut out = open_out(&args.out)?;
                let outcome = commands::enclosure(args, out.as_mut())?;
                out.flush()?;
                Ok(outcome)
            }
        }
    })();

    match outcome {
        Ok(outcome) => {
            for error in &outcome.errors {
                eprintln!("{}", error.to_json_line());
            }
            std::process::exit(outcome.exit_code());
        }
        Err(io_error) => {
            eprintln!(
                "{}",
                output::ErrorRecord::new(
                    output::Failure::InvalidSpec,
                    "io",
                    io_error
                )
                .to_json_line()
            );
            std::process::exit(2);
        }
    }
}
