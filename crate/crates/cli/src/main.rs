#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod check;
mod commands;
mod format;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use regional_bertrand::statics::Parameter;
use regional_bertrand::{Error, Prices, Producer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
    #[error("output: {0}")]
    Io(String),
    #[error("{0} check(s) failed")]
    CheckFailed(usize),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "bertrand", version, about = "Regional Bertrand duopoly with administrative guidance")]
struct Cli {
    /// Write CSV here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Second-stage equilibrium.
    Solve { scenario: PathBuf },
    /// Comparative statics in one parameter.
    Statics {
        scenario: PathBuf,
        #[arg(long, value_parser = parse_param)]
        param: Parameter,
    },
    /// Price-adjustment path with both Liapunov forms.
    Dynamics {
        scenario: PathBuf,
        /// Starting prices as `U,L`.
        #[arg(long, value_parser = parse_prices)]
        p0: Option<Prices>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Optimal guidance.
    Policy {
        scenario: PathBuf,
        #[arg(long, default_value_t = regional_bertrand::policy::DEFAULT_G_MAX)]
        gmax: f64,
    },
    /// Equilibrium with endogenous added value.
    Extended { scenario: PathBuf },
    /// Re-solve along a parameter grid.
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_parser = parse_param)]
        param: Parameter,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
    },
    /// Reaction curves and iso-profit contours.
    Curves {
        scenario: PathBuf,
        #[arg(long, value_parser = parse_producer, default_value = "U")]
        producer: Producer,
        /// Comma-separated profit levels; defaults around the equilibrium profit.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
    },
    /// Run every proposition check; exits 1 if any fails.
    Check {
        scenario: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
}

fn parse_param(s: &str) -> Result<Parameter, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_producer(s: &str) -> Result<Producer, String> {
    match s {
        "U" | "u" => Ok(Producer::U),
        "L" | "l" => Ok(Producer::L),
        _ => Err(format!("expected U or L, got `{s}`")),
    }
}

fn parse_prices(s: &str) -> Result<Prices, String> {
    let (u, l) = s.split_once(',').ok_or("expected `U,L`")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok(Prices::new(p(u)?, p(l)?))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out = cli.out.as_deref();
    let table = match cli.command {
        Command::Solve { scenario } => commands::solve(&scenario::load_scenario(&scenario)?)?,
        Command::Statics { scenario, param } => commands::statics(&scenario::load_scenario(&scenario)?, param)?,
        Command::Dynamics { scenario, p0, dt, steps } => {
            commands::dynamics(&scenario::load_scenario(&scenario)?, p0, dt, steps)?
        }
        Command::Policy { scenario, gmax } => commands::policy(&scenario::load_scenario(&scenario)?, gmax)?,
        Command::Extended { scenario } => commands::extended(&scenario::load_scenario(&scenario)?)?,
        Command::Sweep { scenario, param, from, to, steps } => {
            commands::sweep(&scenario::load_scenario(&scenario)?, param, from, to, steps)?
        }
        Command::Curves { scenario, producer, levels } => {
            commands::curves(&scenario::load_scenario(&scenario)?, producer, levels)?
        }
        Command::Check { scenario, seed, trials } => {
            let lines = check::run(&scenario::load_scenario(&scenario)?, seed, trials);
            check::table(&lines).emit(out)?;
            let failures = lines.iter().filter(|l| !l.pass).count();
            return if failures == 0 { Ok(()) } else { Err(CliError::CheckFailed(failures)) };
        }
    };
    table.emit(out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
