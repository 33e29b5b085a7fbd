//! `httq`: run simulations, limit solves, renewal tables, n-sweeps,
//! comparison checks and regulator maps from JSON experiment files.
//!
//! Exit status: 0 success, 1 runtime failure, 2 invalid input, 3 a
//! `--check` threshold failed.

mod commands;
mod output;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spec::{parse_service, ExperimentSpec, RenewalSpec};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("check failed: {0}")]
    Check(String),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    fn code(&self) -> u8 {
        match self {
            RunError::Invalid(_) => 2,
            RunError::Check(_) => 3,
            RunError::Runtime(_) | RunError::Io(_) => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "httq", version, about = "Many-server queues with abandonment: simulation and diffusion limits")]
struct Cli {
    /// Base seed; overrides the experiment file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true, env = "HTTQ_WORKERS")]
    workers: Option<usize>,
    /// Output root; each run writes to <out>/<spec hash>/seed-<seed>.
    #[arg(long, global = true, default_value = "httq-runs")]
    out: PathBuf,
    /// Exit with status 3 when the run's thresholds are not met.
    #[arg(long, global = true)]
    check: bool,
    /// Grid step for solvers and sampled outputs; overrides the file.
    #[arg(long = "grid-step", global = true)]
    grid_step: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate replications and write event logs, scaled paths and gaps.
    Simulate { spec: PathBuf },
    /// Sample limit-process paths matched to a system config.
    Limit { spec: PathBuf },
    /// Tabulate the renewal function of a service law.
    Renewal {
        spec: Option<PathBuf>,
        /// Service law, e.g. `exp:rate=1` or `erlang:stages=2,rate=2`.
        #[arg(long)]
        service: Option<String>,
        /// Horizon.
        #[arg(long = "T")]
        horizon: Option<f64>,
    },
    /// Run an n-sweep and write the convergence report.
    Sweep { spec: PathBuf },
    /// Check the abandonment/no-abandonment queue comparison.
    Compare { spec: PathBuf },
    /// Apply a regulator map to a tabulated input.
    Maps { spec: PathBuf },
}

fn load(command: &Command) -> Result<ExperimentSpec, RunError> {
    match command {
        Command::Simulate { spec } => ExperimentSpec::from_file(spec, "simulate"),
        Command::Limit { spec } => ExperimentSpec::from_file(spec, "limit"),
        Command::Sweep { spec } => ExperimentSpec::from_file(spec, "sweep"),
        Command::Compare { spec } => ExperimentSpec::from_file(spec, "compare"),
        Command::Maps { spec } => ExperimentSpec::from_file(spec, "maps"),
        Command::Renewal {
            spec: Some(path),
            service: None,
            horizon: None,
        } => ExperimentSpec::from_file(path, "renewal"),
        Command::Renewal {
            spec: None,
            service: Some(service),
            horizon: Some(horizon),
        } => {
            if !(*horizon > 0.0) {
                return Err(RunError::Invalid("--T must be positive".into()));
            }
            Ok(ExperimentSpec::Renewal(RenewalSpec {
                service: parse_service(service)?,
                horizon: *horizon,
                grid_step: None,
            }))
        }
        Command::Renewal { .. } => Err(RunError::Invalid(
            "renewal takes either a spec file or both --service and --T".into(),
        )),
    }
}

fn run(cli: Cli) -> Result<PathBuf, RunError> {
    let spec = load(&cli.command)?;
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(RunError::Invalid("--workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Runtime(e.to_string()))?;
    let opts = commands::Options {
        seed: cli.seed.or(spec.seed()).unwrap_or(0),
        out: cli.out,
        check: cli.check,
        grid_step: cli.grid_step,
    };
    pool.install(|| commands::execute(&spec, &opts))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("httq: {e}");
            ExitCode::from(e.code())
        }
    }
}
