//! `chargecap`: loss-of-load, provisioning, pricing and simulation for
//! multi-class charging stations.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 a solve that did not
//! converge or a failed `--check`.

mod commands;
mod config;
mod grid;
mod table;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use chargecap::{Objective, ServiceDistribution};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::grid::Grid;
use crate::table::Format;

#[derive(Debug, Parser)]
#[command(
    name = "chargecap",
    version,
    about = "Multi-class charging station analytics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (JSON)
    #[arg(long, short)]
    config: PathBuf,
    /// Directory for the output table and its manifest; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed, overriding the config file
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Station capacity, overriding the config file
    #[arg(long)]
    capacity: Option<u32>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a scenario file and report every problem found
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Per-class loss-of-load probabilities, optionally over a sweep
    Lolp {
        #[command(flatten)]
        common: Common,
        /// Total arrival rate grid lo:hi:n
        #[arg(long)]
        sweep_lambda: Option<Grid>,
        /// How a swept total rate is divided among classes
        #[arg(long, value_enum, default_value_t = Split::Equal, requires = "sweep_lambda")]
        split: Split,
        /// Capacity grid lo:hi:n (rounded to whole units)
        #[arg(long)]
        sweep_capacity: Option<Grid>,
        /// Use exact state enumeration instead of the recursion
        #[arg(long)]
        exact: bool,
    },
    /// Minimum capacity meeting per-class LoLP targets
    Provision {
        #[command(flatten)]
        common: Common,
        /// Targets, one per class, overriding `qos` in the config
        #[arg(long, value_delimiter = ',', conflicts_with = "delta_grid")]
        delta: Option<Vec<f64>>,
        /// Target grid lo:hi:n shared by all classes; every combination is provisioned
        #[arg(long)]
        delta_grid: Option<Grid>,
        /// Target of the near-lossless reference design for the savings column
        #[arg(long, default_value_t = 1e-6)]
        strict_delta: f64,
    },
    /// Welfare-maximizing arrival rates and congestion prices
    Price {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Net)]
        objective: ObjectiveArg,
        /// Extra starting point for the solver, one rate per class
        #[arg(long, value_delimiter = ',')]
        init: Option<Vec<f64>>,
        /// Also report per-customer rates for this many identical customers
        #[arg(long)]
        customers: Option<usize>,
    },
    /// Monte Carlo estimate of the loss-of-load probabilities
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Simulated time (per period when the config has a profile)
        #[arg(long)]
        horizon: Option<f64>,
        /// Initial time excluded from the tallies
        #[arg(long)]
        warmup: Option<f64>,
        /// Independent replications
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, value_enum)]
        service: Option<ServiceArg>,
        /// Fail with exit code 2 when any estimate is more than 3 standard
        /// errors from the analytic value
        #[arg(long)]
        check: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Split {
    /// Every class gets total / J
    Equal,
    /// Rates keep the config's proportions
    Proportional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ObjectiveArg {
    /// Utility net of congestion charges
    Net,
    /// Utility alone
    Gross,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Net => Objective::NetOfCharges,
            ObjectiveArg::Gross => Objective::Gross,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ServiceArg {
    Exponential,
    Deterministic,
}

impl From<ServiceArg> for ServiceDistribution {
    fn from(s: ServiceArg) -> Self {
        match s {
            ServiceArg::Exponential => ServiceDistribution::Exponential,
            ServiceArg::Deterministic => ServiceDistribution::Deterministic,
        }
    }
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, unreadable or invalid config, or an error from the library.
    Input(anyhow::Error),
    /// The run finished and its output was written, but a result is flagged.
    Check(String),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.into())
    }
}

fn paint(tag: &str, ansi: &str) -> String {
    let color = std::env::var_os("NO_COLOR").is_none() && std::io::stderr().is_terminal();
    if color {
        format!("\x1b[{ansi}m{tag}\x1b[0m")
    } else {
        tag.to_string()
    }
}

pub fn report_error(msg: impl std::fmt::Display) {
    eprintln!("{}: {msg}", paint("error", "1;31"));
}

pub fn report_warning(msg: impl std::fmt::Display) {
    eprintln!("{}: {msg}", paint("warning", "1;33"));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            report_error(format!("{e:#}"));
            ExitCode::from(1)
        }
        Err(Failure::Check(msg)) => {
            report_error(msg);
            ExitCode::from(2)
        }
    }
}
