//! `ssnkit` command-line harness.
//!
//! Exit codes: 0 success, 1 run or suite failure, 2 configuration error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Experiment;
use ssnkit::residual::ResidualKind;
use ssnkit::verify::Suite;

#[derive(Parser)]
#[command(name = "ssnkit", version, about = "Semismooth Newton solver, diagnostics and verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance and write trace, summary and plot data.
    Solve(RunArgs),
    /// Certify regularity conditions at a candidate point.
    Diagnose {
        #[command(flatten)]
        run: RunArgs,
        /// Candidate point: a JSON array, or a trace.json / summary with `x_final`.
        #[arg(long)]
        point: Option<PathBuf>,
    },
    /// Run a pinned-seed property suite.
    Verify {
        #[arg(value_enum)]
        suite: SuiteArg,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Generate an instance file.
    Gen {
        #[command(flatten)]
        run: RunArgs,
        /// Output file; defaults to `<out-dir>/instance.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Default)]
pub struct RunArgs {
    /// JSON run configuration (see `resolved_config.json` of any run).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in experiment preset.
    #[arg(long, value_enum)]
    pub experiment: Option<Experiment>,
    /// Instance file written by `gen`.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub residual: Option<ResidualArg>,
    /// Comma-separated support indices for the projected solver.
    #[arg(long)]
    pub manifold_support: Option<String>,
    /// Residual tolerance of the solver.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ResidualArg {
    Pgm,
    Drs,
    Alm,
}

impl From<ResidualArg> for ResidualKind {
    fn from(r: ResidualArg) -> Self {
        match r {
            ResidualArg::Pgm => ResidualKind::Pgm,
            ResidualArg::Drs => ResidualKind::Drs,
            ResidualArg::Alm => ResidualKind::Alm,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    ProxOracles,
    Jacobians,
    BdEquivalence,
    Rates,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::ProxOracles => Suite::ProxOracles,
            SuiteArg::Jacobians => Suite::Jacobians,
            SuiteArg::BdEquivalence => Suite::BdEquivalence,
            SuiteArg::Rates => Suite::Rates,
        }
    }
}

/// Failure classes mapped to exit codes.
pub enum CliError {
    Config(String),
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Failed(_) => ExitCode::from(1),
            CliError::Config(_) => ExitCode::from(2),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(run) => commands::solve(&run),
        Command::Diagnose { run, point } => commands::diagnose(&run, point.as_deref()),
        Command::Verify { suite, out_dir } => commands::verify(suite.into(), out_dir.as_deref()),
        Command::Gen { run, out } => commands::gen(&run, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Config(msg) => eprintln!("configuration error: {msg}"),
                CliError::Failed(msg) => eprintln!("error: {msg}"),
            }
            e.exit_code()
        }
    }
}
