//! `hestonpw`: calibrate piecewise Heston schedules to FX smiles, price vanilla
//! and window-barrier options, and dump pricing integrands.
//!
//! Exit codes: 0 success, 1 numerical failure or non-convergence, 2 usage or input error.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::{CalibrateArgs, DumpArgs, PriceArgs};
use crate::config::Config;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Failed(String),
}

impl CliError {
    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::Failed(m) => m,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) | CliError::Input(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    Analytic,
    Fd,
    Mc,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Analytic => "analytic",
            Engine::Fd => "fd",
            Engine::Mc => "mc",
        }
    }
}

#[derive(Parser)]
#[command(name = "hestonpw", version, about = "Piecewise-constant Heston calibration and window-barrier pricing")]
struct Cli {
    /// TOML file with [quadrature], [lm], [calibration], [bounds], [fd] and [mc] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output CSV file; stdout when omitted.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Pricing engine (default: analytic).
    #[arg(long, global = true, value_enum)]
    engine: Option<Engine>,
    /// Monte Carlo seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Absolute quadrature tolerance for the semi-analytic pricer.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a global schedule to a quote file, then bootstrap piecewise segments.
    Calibrate {
        /// CSV with columns tenor,spot,r_dom,r_for,delta,vol.
        quotes: PathBuf,
        /// Comma-separated segment end times (year fractions); every quoted tenor when omitted.
        #[arg(long, value_delimiter = ',')]
        intervals: Vec<f64>,
        /// Stop after the constant-parameter global fit.
        #[arg(long)]
        global_only: bool,
    },
    /// Price the instruments in a CSV file under a parameter schedule.
    Price {
        /// CSV with columns from,to,v0,theta,kappa,rho,xi.
        schedule: PathBuf,
        /// CSV with columns id,maturity,spot,r_dom,r_for,option,strike[,notional,barrier,side,knock,window_start,window_end,rebate].
        instruments: PathBuf,
    },
    /// Write the probability integrand with and without control variate over a phi grid.
    IntegrandDump {
        schedule: PathBuf,
        #[arg(long)]
        tenor: f64,
        #[arg(long, default_value_t = 1.0)]
        spot: f64,
        #[arg(long, default_value_t = 0.0)]
        r_dom: f64,
        #[arg(long, default_value_t = 0.0)]
        r_for: f64,
        /// Absolute strike; overrides --moneyness.
        #[arg(long)]
        strike: Option<f64>,
        /// Strike as a multiple of spot.
        #[arg(long, default_value_t = 1.0)]
        moneyness: f64,
        /// Which probability, 1 or 2.
        #[arg(long, default_value_t = 1)]
        prob: u8,
        #[arg(long, default_value_t = 0.01)]
        phi_min: f64,
        #[arg(long, default_value_t = 100.0)]
        phi_max: f64,
        #[arg(long, default_value_t = 2000)]
        points: usize,
    },
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = Config::load(cli.config.as_deref(), cli.tolerance, cli.seed)?;
    let output = cli.output.as_deref();
    match &cli.command {
        Command::Calibrate {
            quotes,
            intervals,
            global_only,
        } => commands::calibrate(
            &CalibrateArgs {
                quotes,
                intervals,
                global_only: *global_only,
                output,
            },
            cli.engine,
            &cfg,
        ),
        Command::Price { schedule, instruments } => commands::price(
            &PriceArgs {
                schedule,
                instruments,
                output,
            },
            cli.engine.unwrap_or(Engine::Analytic),
            &cfg,
        ),
        Command::IntegrandDump {
            schedule,
            tenor,
            spot,
            r_dom,
            r_for,
            strike,
            moneyness,
            prob,
            phi_min,
            phi_max,
            points,
        } => commands::integrand_dump(&DumpArgs {
            schedule,
            tenor: *tenor,
            spot: *spot,
            r_dom: *r_dom,
            r_for: *r_for,
            strike: *strike,
            moneyness: *moneyness,
            prob: *prob,
            phi_min: *phi_min,
            phi_max: *phi_max,
            points: *points,
            output: cli.output.as_ref(),
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
