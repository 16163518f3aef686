//! `peridyn-kv`: verification suites, single simulations and horizon sweeps.

mod config;
mod output;
mod simulate;
mod sweep;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use output::Output;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    /// A scientific gate or the numerics failed.
    #[error("{0}")]
    Failed(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<peridyn_kv::Error> for CliError {
    fn from(e: peridyn_kv::Error) -> Self {
        match e {
            peridyn_kv::Error::Config(m) => CliError::Config(m),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failed(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "peridyn-kv", version, about = "Peridynamic Kelvin-Voigt viscoelasticity laboratory")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides NLKV_OUTPUT and the config file).
    #[arg(long, global = true, env = "NLKV_OUTPUT")]
    output: Option<PathBuf>,

    /// Seed for the randomized suites (overrides NLKV_SEED and the config file).
    #[arg(long, global = true, env = "NLKV_SEED")]
    seed: Option<u64>,

    /// Worker threads, 0 for all cores (overrides NLKV_THREADS and the config file).
    #[arg(long, global = true, env = "NLKV_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the exact-identity and structure checks.
    Verify,
    /// Integrate one model and write its trajectory.
    Simulate,
    /// Run a horizon sweep against a finite element reference.
    Sweep,
}

/// Settings after applying flag > environment > file precedence.
pub struct Resolved {
    pub config: RunConfig,
    pub seed: u64,
}

fn resolve(cli: &Cli) -> Result<(Resolved, PathBuf, usize), CliError> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let output = cli
        .output
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from(config::DEFAULT_OUTPUT));
    let seed = cli.seed.or(config.seed).unwrap_or(config::DEFAULT_SEED);
    let threads = cli.threads.or(config.threads).unwrap_or(0);
    Ok((Resolved { config, seed }, output, threads))
}

fn execute(cli: &Cli) -> Result<(), (CliError, Option<Output>)> {
    let (resolved, dir, threads) = resolve(cli).map_err(|e| (e, None))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| (CliError::Config(format!("cannot configure {threads} threads: {e}")), None))?;
    }
    let out = Output::create(&dir).map_err(|e| (e, None))?;
    let result = match cli.command {
        Command::Verify => verify::run(&resolved, &out),
        Command::Simulate => simulate::run(&resolved, &out),
        Command::Sweep => sweep::run(&resolved, &out),
    };
    result.map_err(|e| (e, Some(out)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((err, out)) => {
            eprintln!("peridyn-kv: {err}");
            if let Some(out) = out {
                if let Err(e) = out.mark_failed(&err.to_string()) {
                    eprintln!("peridyn-kv: could not write failure marker: {e}");
                }
            }
            ExitCode::from(err.exit_code())
        }
    }
}
