use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use coolsim::analysis::NuConvention;
use coolsim::SimError;

mod commands;
mod config;

use config::{ConfigError, Mode, Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "coolsim", version, about = "Non-Markovian sideband cooling with initial optomechanical correlations")]
struct Cli {
    /// JSON configuration; every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long, env = "COOLSIM_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-max")]
    t_max: Option<f64>,
    /// Real initial correlation `<db^dag da>`.
    #[arg(long, allow_hyphen_values = true)]
    c1: Option<f64>,
    /// Real initial correlation `<db da>`.
    #[arg(long, allow_hyphen_values = true)]
    c2: Option<f64>,
    #[arg(long = "nu-i-convention", value_parser = ["a", "b", "A", "B"])]
    nu_i_convention: Option<String>,
}

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Divergence(String),
    OracleTolerance(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Divergence(_) => 3,
            Failure::OracleTolerance(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Divergence(m) | Failure::OracleTolerance(m) => m,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Divergence { .. } => Failure::Divergence(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid(inner) => inner.into(),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(format!("output: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Config(format!("json: {e}"))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let overrides = Overrides {
        mode: cli.mode,
        dt: cli.dt,
        t_max: cli.t_max,
        c1: cli.c1,
        c2: cli.c2,
        convention: cli.nu_i_convention.map(|s| s.parse::<NuConvention>()).transpose()?,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    let workers = match cli.workers {
        Some(0) => return Err(Failure::Config("--workers must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| Failure::Config(format!("cannot create output directory {}: {e}", cli.out.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::Config(format!("worker pool: {e}")))?;
    pool.install(|| commands::dispatch(&cfg, &cli.out, workers))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("coolsim: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
