//! `hyperpol` command line tool: discrete PulsePol simulations, robustness
//! sweeps, continuum steady states and closed-form analytics, all driven by
//! a JSON config and emitting deterministic CSV/JSON artifacts.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use config::ExperimentConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or invalid parameters; exit code 2.
    Config(String),
    /// Failure during computation or output emission; exit code 3.
    Runtime(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    /// Core errors raised while interpreting the config are config errors.
    pub fn from_config_stage(e: hyperpol::Error) -> Self {
        CliError::Config(e.to_string())
    }

    /// Core errors raised mid-computation are numerical failures.
    pub fn from_run(e: hyperpol::Error) -> Self {
        CliError::Runtime(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "hyperpol", version, about = "Pulsed dynamical nuclear polarization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Path to the JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps and PDE stepping.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Reserved; the current pipeline is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Discrete density-matrix run emitting polarization time series.
    Simulate,
    /// Detuning x Rabi-error robustness sweep.
    Sweep,
    /// Continuum steady-state solve with map and buildup exports.
    Continuum,
    /// Closed-form rates, couplings and optimal cycle durations.
    Analytics,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Continuum => "continuum",
            Command::Analytics => "analytics",
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config <path> is required"))?;
    let out = cli
        .out
        .as_ref()
        .ok_or_else(|| CliError::config("--out <dir> is required"))?;
    let config_text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::config(format!("read {}: {e}", config_path.display())))?;
    let config = ExperimentConfig::parse(&config_text)?;

    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::config("--workers must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::runtime(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::runtime(format!("create {}: {e}", out.display())))?;

    let start = Instant::now();
    let files = match cli.command {
        Command::Simulate => commands::simulate(&config, out)?,
        Command::Sweep => commands::sweep(&config, out)?,
        Command::Continuum => commands::continuum(&config, out)?,
        Command::Analytics => commands::analytics(&config, out)?,
    };
    output::write_manifest(
        out,
        &config_text,
        cli.command.name(),
        cli.seed,
        start.elapsed().as_secs_f64(),
        &files,
    )?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
