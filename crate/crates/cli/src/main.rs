//! `enmo`: simulate, fit and project the ENMO → OMS cascade from the command line.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical non-convergence.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use enmo_core::characterize::ResidualSpace;
use enmo_core::error::EnmoError;
use enmo_core::optics::{CrossTerm, StrengthVariant};

#[derive(Debug)]
pub enum CliError {
    Input(String),
    NonConvergence(String),
}

impl From<EnmoError> for CliError {
    fn from(e: EnmoError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::NonConvergence(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cavity setting the ENMO measurement strength: as-printed|meter-analogy.
    #[arg(long, global = true)]
    pub variant: Option<StrengthVariant>,
    /// Amplitude-phase correlation entry of the covariance: as-printed|normalized.
    #[arg(long, global = true)]
    pub cross_term: Option<CrossTerm>,
    /// Which data files to write where a command can emit both.
    #[arg(long, global = true, value_enum, default_value_t = Format::Both)]
    pub format: Format,
}

#[derive(Debug, Parser)]
#[command(name = "enmo", version, about = "ENMO / optomechanical sensor noise modelling")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Model variance spectra at the configured detection angles.
    Simulate,
    /// Projected back-action cancellation of the ENMO in front of the sensor.
    Project,
    /// Fit a trace set.
    Fit(FitArgs),
    /// Synthetic trace set from a truth file and a measurement design.
    Synth(SynthArgs),
    /// Squeezing-ellipse spectrum.
    Tomo,
    /// ENMO/sensor matching conditions.
    Check(CheckArgs),
    /// Efficiency budget against squeezing measurements.
    Budget(BudgetArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Initial parameters, in the ENMO parameter-file format.
    #[arg(long)]
    pub init: PathBuf,
    /// Fit the detection efficiency as well (degenerate with g_a at a single angle pair).
    #[arg(long)]
    pub free_eta: bool,
    /// Hold kappa_c and delta_c at their initial values.
    #[arg(long)]
    pub fix_meter: bool,
    #[arg(long, default_value = "db")]
    pub residual_space: ResidualSpace,
    #[arg(long, default_value_t = 300)]
    pub max_iterations: usize,
    /// Known per-point noise level, in residual-space units.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Truth parameters, in the ENMO parameter-file format.
    #[arg(long)]
    pub truth: PathBuf,
    /// Detunings, angles, band, noise and seed.
    #[arg(long)]
    pub design: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub enmo: Option<PathBuf>,
    #[arg(long)]
    pub oms: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub relative: f64,
    #[arg(long, default_value_t = 3.0)]
    pub hierarchy_ratio: f64,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    /// Loss channels: `[{"name": ..., "eta": ..., "sigma": ...}, ...]`.
    #[arg(long)]
    pub budget: PathBuf,
    /// Measured squeezing in dB (negative).
    #[arg(long, allow_negative_numbers = true)]
    pub sqz: f64,
    /// Measured anti-squeezing in dB.
    #[arg(long, allow_negative_numbers = true)]
    pub antisqz: f64,
    /// 1σ of the efficiency inferred from squeezing.
    #[arg(long, default_value_t = 0.02)]
    pub measured_sigma: f64,
    /// Consistency threshold in combined standard deviations.
    #[arg(long, default_value_t = 2.0)]
    pub k: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = &cli.common;
    let result = match &cli.command {
        Command::Simulate => commands::simulate(c),
        Command::Project => commands::project(c),
        Command::Fit(a) => commands::fit(c, a),
        Command::Synth(a) => commands::synth(c, a),
        Command::Tomo => commands::tomo(c),
        Command::Check(a) => commands::check(c, a),
        Command::Budget(a) => commands::budget(c, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Input(m) => eprintln!("error: {m}"),
                CliError::NonConvergence(m) => eprintln!("fit did not converge: {m}"),
            }
            ExitCode::from(e.code())
        }
    }
}
