//! `orbital`: command-line driver for the orbital-core estimators and
//! identity checks. Every subcommand writes one JSON report (the `sample`
//! subcommand also writes CSV path dumps).
//!
//! Exit codes: 0 success, 2 parameter error, 3 identity check failed,
//! 4 unreliable Monte Carlo estimate.

mod commands;
mod expr;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use orbital_core::McConfig;
use serde_json::Value;

/// Directory for reports when `--out` is not given.
pub const OUT_DIR_ENV: &str = "ORBITAL_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error(transparent)]
    Core(#[from] orbital_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(orbital_core::Error::NonFinite { .. }) => 4,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Failed,
    Unreliable,
}

impl Status {
    pub fn from_checks(pass: bool, unreliable: bool) -> Self {
        if unreliable {
            Status::Unreliable
        } else if pass {
            Status::Pass
        } else {
            Status::Failed
        }
    }

    fn name(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Failed => "fail",
            Status::Unreliable => "unreliable",
        }
    }

    fn exit_code(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::Failed => 3,
            Status::Unreliable => 4,
        }
    }
}

/// A finished report: the JSON body and its verdict.
pub struct Report {
    pub body: Value,
    pub status: Status,
}

#[derive(Parser, Debug)]
#[command(name = "orbital", version, about = "Orbital measures and Schwarzian field theory: estimators and identity checks")]
pub struct Cli {
    /// Report file (default: stdout, or $ORBITAL_OUT_DIR/<command>.json).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for Monte Carlo (0: all cores). Does not change results.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Independent random streams per estimate. Part of the result's identity.
    #[arg(long, global = true, default_value_t = 64)]
    chunks: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo partition ratio against the closed form.
    PartitionRatio(commands::PartitionRatio),
    /// Both sides of the boundary-defect identity.
    DefectCheck(commands::DefectCheck),
    /// Two-sided pushforward test of the bridge change-of-variables density.
    CovCheck(commands::CovCheck),
    /// Builds f_q with S(f_q) = q from Hill's equation.
    HillSolve(commands::HillSolve),
    /// Energy of Möbius maps by quadrature against the closed form.
    PoissonCheck(commands::PoissonCheck),
    /// The Haar regulariser D^alpha.
    HaarRegularizer(commands::HaarRegularizer),
    /// Laplace transform of the density of states against the partition function.
    SpectralCheck(commands::SpectralCheck),
    /// Schwarzian partition function and its alpha -> pi regularisation.
    SchwarzianZ(commands::SchwarzianZ),
    /// Varying-metric partition function and correlators.
    Metric(commands::Metric),
    /// Bridge path dumps and cross-ratio statistics.
    Sample(commands::Sample),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::PartitionRatio(_) => "partition-ratio",
            Command::DefectCheck(_) => "defect-check",
            Command::CovCheck(_) => "cov-check",
            Command::HillSolve(_) => "hill-solve",
            Command::PoissonCheck(_) => "poisson-check",
            Command::HaarRegularizer(_) => "haar-regularizer",
            Command::SpectralCheck(_) => "spectral-check",
            Command::SchwarzianZ(_) => "schwarzian-z",
            Command::Metric(_) => "metric",
            Command::Sample(_) => "sample",
        }
    }
}

/// Monte Carlo settings shared by the sampling subcommands.
#[derive(Debug, Clone, Copy)]
pub struct Globals {
    pub workers: usize,
    pub chunks: usize,
}

impl Globals {
    pub fn mc(&self, samples: usize, seed: u64) -> McConfig {
        McConfig::new(samples, seed)
            .with_chunks(self.chunks)
            .with_workers(self.workers)
    }
}

fn run(cli: &Cli) -> Result<Report, CliError> {
    let g = Globals {
        workers: cli.workers,
        chunks: cli.chunks,
    };
    if g.chunks == 0 {
        return Err(CliError::Parameter("--chunks must be at least 1".into()));
    }
    match &cli.command {
        Command::PartitionRatio(a) => a.run(&g),
        Command::DefectCheck(a) => a.run(&g),
        Command::CovCheck(a) => a.run(&g),
        Command::HillSolve(a) => a.run(),
        Command::PoissonCheck(a) => a.run(),
        Command::HaarRegularizer(a) => a.run(),
        Command::SpectralCheck(a) => a.run(),
        Command::SchwarzianZ(a) => a.run(),
        Command::Metric(a) => a.run(),
        Command::Sample(a) => a.run(&g),
    }
}

fn write_report(cli: &Cli, body: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(body).expect("reports serialise") + "\n";
    let path = match (&cli.out, std::env::var_os(OUT_DIR_ENV)) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(dir)) => Some(PathBuf::from(dir).join(format!("{}.json", cli.command.name()))),
        (None, None) => None,
    };
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(p, text)?;
        }
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let report = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("orbital {}: {e}", cli.command.name());
            return ExitCode::from(e.exit_code());
        }
    };
    let mut body = report.body;
    if let Value::Object(map) = &mut body {
        map.insert("command".into(), Value::from(cli.command.name()));
        map.insert("status".into(), Value::from(report.status.name()));
    }
    if let Err(e) = write_report(&cli, &body) {
        eprintln!("orbital {}: {e}", cli.command.name());
        return ExitCode::from(e.exit_code());
    }
    if report.status != Status::Pass {
        eprintln!("orbital {}: {}", cli.command.name(), report.status.name());
    }
    ExitCode::from(report.status.exit_code())
}
