//! `vbt`: sample paths, run the validation suites, and run convergence
//! experiments, writing CSV.
//!
//! Exit codes: 0 success, 1 a validation suite failed, 2 bad configuration
//! or a runtime error.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use vbt_core::LevyMode;

#[derive(Parser, Debug)]
#[command(name = "vbt", version, about, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate one path at the given times (or on its vertex grid).
    Sample(SampleArgs),
    /// Run the statistical validation suites; exit 1 if any statistic fails.
    Validate(ValidateArgs),
    /// Constant vs adaptive drift-implicit Euler on CIR.
    Cir(CirArgs),
    /// Strong order of convergence of a model solver.
    Soc(SocArgs),
}

/// Flags shared by every command.
#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    /// Root seed, decimal or 0x-prefixed hex.
    #[arg(long, default_value = "0")]
    seed: String,
    /// Worker threads (default: all cores). Does not affect results.
    #[arg(long)]
    #[serde(skip)]
    threads: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// TOML file of flag values; overrides flags given on the command line.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    None,
    St,
    Stt,
}

impl From<ModeArg> for LevyMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::None => LevyMode::None,
            ModeArg::St => LevyMode::SpaceTime,
            ModeArg::Stt => LevyMode::SpaceTimeTime,
        }
    }
}

/// The tree: interval, tolerance, dimension and areas.
#[derive(Args, Debug, Clone, Serialize)]
struct PathArgs {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    t0: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    t1: f64,
    /// Tolerance: the leaf width is the largest (t1 - t0)·2^-L not above it.
    #[arg(long, default_value_t = 2f64.powi(-10))]
    eps: f64,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Lévy areas to generate.
    #[arg(long, value_enum, default_value_t = ModeArg::Stt)]
    mode: ModeArg,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    path: PathArgs,
    /// Query times, comma-separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    times: Vec<f64>,
    /// Emit every vertex of the dyadic grid instead of `--times`.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value_t = false, action = clap::ArgAction::Set)]
    grid: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FaultArg {
    None,
    FlipHkMean,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ValidateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    path: PathArgs,
    #[arg(long, default_value_t = 10_000)]
    n_seeds: usize,
    /// Corrupt a bridge coefficient, to check the suites catch it.
    #[arg(long, value_enum, default_value_t = FaultArg::None, hide = true)]
    inject_fault: FaultArg,
}

#[derive(Args, Debug, Clone, Serialize)]
struct CirArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value_t = 1.5)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    x0: f64,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 200)]
    n_seeds: usize,
    /// Constant step counts; each a multiple of the smallest.
    #[arg(long, value_delimiter = ',', default_values_t = [8usize, 16, 32, 64, 128])]
    steps: Vec<usize>,
    /// Global tolerances of the adaptive controller.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05, 0.02, 0.01])]
    tolerances: Vec<f64>,
    #[arg(long, default_value_t = 2f64.powi(-13))]
    h_min: f64,
    #[arg(long, default_value_t = 0.25)]
    h_max: f64,
    /// `C` in `h = C·(x ε)^{2/3}`.
    #[arg(long, default_value_t = 1.0)]
    cir_constant: f64,
    /// Run with `b - σ²/(4a) < 0`, truncating the scheme at zero.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value_t = false, action = clap::ArgAction::Set)]
    allow_truncation: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Model {
    /// Geometric Brownian motion, Euler–Maruyama, exact reference.
    Gbm,
    /// Ornstein–Uhlenbeck, Euler–Maruyama, fine-step reference.
    Ou,
    /// Integrated Brownian motion, exact (W, H) stepper.
    Ibm,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SocArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value_t = Model::Gbm)]
    model: Model,
    #[arg(long, default_value_t = 200)]
    n_seeds: usize,
    /// Step counts, each a multiple of the smallest [default: 16..256 for
    /// gbm, 8..128 otherwise].
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<usize>>,
    /// GBM drift.
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    mu: f64,
    /// OU mean reversion.
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    /// Volatility [default: 0.2 for gbm, 1 for ou].
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    x0: f64,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
}

impl Command {
    fn config(&self) -> Option<&PathBuf> {
        match self {
            Command::Sample(a) => a.common.config.as_ref(),
            Command::Validate(a) => a.common.config.as_ref(),
            Command::Cir(a) => a.common.config.as_ref(),
            Command::Soc(a) => a.common.config.as_ref(),
        }
    }
}

enum Failure {
    /// A validation statistic failed.
    Check(String),
    Error(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Error(e)
    }
}

fn parse() -> anyhow::Result<Cli> {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let cli = Cli::try_parse_from(&argv).unwrap_or_else(|e| e.exit());
    match cli.command.config() {
        None => Ok(cli),
        Some(path) => {
            let mut full = argv;
            full.extend(config::config_flags(path)?);
            Ok(Cli::try_parse_from(full).unwrap_or_else(|e| e.exit()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = parse().map_err(Failure::from).and_then(|cli| commands::run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
