//! `kramers`: command-line front end for pulsed-ESR modelling of Kramers ions.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "kramers", version, about = "Pulsed-ESR modelling of Kramers ions")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to `paths.out` or `./out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for stochastic commands; overrides `simulation.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Validate the configuration and print it with defaults filled in.
    Config,
    /// Tracked eigenenergies against field magnitude.
    Levels(LevelsArgs),
    /// Echo-detected field sweep of the powder.
    Edfs(EdfsArgs),
    /// Allowed transitions near the probe frequency at one field.
    Transitions(TransitionsArgs),
    /// Rabi nutation curve.
    Rabi(RabiArgs),
    /// Filter function and toggling-frame scores of a pulse sequence.
    Filter(FilterArgs),
    /// Sequence with a given disorder-to-interaction ratio.
    Ratio(RatioArgs),
    /// Monte Carlo echo decay in a fluctuating spin bath.
    SimulateDecay(DecayArgs),
    /// Fit a model to a CSV trace.
    Fit(FitArgs),
    /// Noise spectrum from CPMG coherence times.
    Psd(PsdArgs),
    /// Coherence time against temperature from the relaxation models.
    PredictT2(PredictArgs),
}

#[derive(Args, Debug)]
pub struct LevelsArgs {
    #[arg(long)]
    pub b_min: Option<f64>,
    #[arg(long)]
    pub b_max: Option<f64>,
    #[arg(long, default_value_t = 301)]
    pub points: usize,
    /// Site label; defaults to the first site.
    #[arg(long)]
    pub site: Option<String>,
}

#[derive(Args, Debug)]
pub struct EdfsArgs {
    /// Overrides `simulation.orientations`.
    #[arg(long)]
    pub orientations: Option<usize>,
    #[arg(long, default_value_t = 561)]
    pub points: usize,
    /// Seeded quasi-random orientations instead of the spiral grid.
    #[arg(long)]
    pub quasi_random: bool,
}

#[derive(Args, Debug)]
pub struct TransitionsArgs {
    /// Field magnitude, T; defaults to `experiment.field`.
    #[arg(long)]
    pub field: Option<f64>,
    /// Half-width of the frequency window, Hz; defaults to the pulse bandwidth.
    #[arg(long)]
    pub window: Option<f64>,
}

#[derive(Args, Debug)]
pub struct RabiArgs {
    /// Transverse g factor of the driven transition.
    #[arg(long)]
    pub g_transverse: f64,
    /// Longest pulse, s.
    #[arg(long, default_value_t = 1e-6)]
    pub max_length: f64,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SequenceName {
    Hahn,
    Cpmg,
    Xy8,
    Table,
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    #[arg(long, value_enum, default_value_t = SequenceName::Cpmg)]
    pub sequence: SequenceName,
    /// Pulse spacing, s (Hahn: tau = t_sep / 2).
    #[arg(long, default_value_t = 20e-6)]
    pub t_sep: f64,
    /// Pi pulses for CPMG, blocks for XY8.
    #[arg(long, default_value_t = 1)]
    pub pulses: usize,
    /// Sequence table for `--sequence table`.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RatioArgs {
    /// Target ratio, a number or `inf`.
    #[arg(long)]
    pub ratio: f64,
    /// Shortest pulse interval, s; defaults to `experiment.min_separation`.
    #[arg(long)]
    pub spacing: Option<f64>,
    /// Maximum number of pulses.
    #[arg(long, default_value_t = 96)]
    pub budget: usize,
}

#[derive(Args, Debug)]
pub struct DecayArgs {
    #[arg(long, value_enum, default_value_t = SequenceName::Hahn)]
    pub sequence: SequenceName,
    /// Pi pulses for CPMG, blocks for XY8.
    #[arg(long, default_value_t = 1)]
    pub pulses: usize,
    /// Longest total evolution time, s.
    #[arg(long, default_value_t = 4e-3)]
    pub t_max: f64,
    #[arg(long, default_value_t = 40)]
    pub points: usize,
    /// Overrides `simulation.trials`.
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitKind {
    /// `A exp(-(t/T2)^n)`.
    Hahn,
    /// `A (1 - exp(-t/T1))`.
    Recovery,
    /// Spin-lattice rates from `(temperature, T1)`.
    T1,
    /// Bath parameters from `(temperature, T2)`.
    T2,
    /// Spectral diffusion from `(T_w, Gamma_eff)`.
    Sd,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(value_enum)]
    pub kind: FitKind,
    /// CSV with header `t_seconds,amplitude[,sigma]`.
    pub input: PathBuf,
    /// Hold the stretch factor (hahn only).
    #[arg(long)]
    pub fixed_n: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PsdArgs {
    /// CSV with header `pulses,t_sep_s,t2_s[,label]`.
    pub runs: PathBuf,
    /// Also write the field PSD for this effective g.
    #[arg(long)]
    pub g: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long, default_value_t = 0.02)]
    pub t_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 50)]
    pub points: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let args: Vec<String> = std::env::args().skip(1).collect();
    match commands::run(&cli, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
