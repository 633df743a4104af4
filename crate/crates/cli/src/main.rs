//! `amv`: evaluate asymptotic mean value Laplacians, run verification suites
//! and export discrete operators.
//!
//! Exit codes: 0 on success (and all cases passing for `verify`), 1 for
//! configuration errors, 2 for numerical or evaluation failures, including
//! failed verification cases.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Format;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configs, unwritable outputs.
    Config(String),
    /// Failures while computing.
    Eval(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Eval(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Eval(m) => write!(f, "evaluation error: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "amv", version, about = "Asymptotic mean value Laplacians on metric measure spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct OutputArgs {
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Study Δ_r u as r → 0 at the configured points.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run a named verification suite and write its report.
    Verify {
        #[arg(long)]
        suite: String,
        /// Optional JSON with seed, budget, schedule and output overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Record wall-clock duration in the report.
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Check the discrete Green identity on a cloud.
    Green {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Solve Δ_r u = f with data on the boundary collar.
    Poisson {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write the sparse matrix of T_r or Δ_r on a cloud.
    ExportOperator {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Regenerate the Heisenberg unit-ball constants by Monte Carlo.
    HeisenbergConstants {
        #[arg(long, default_value_t = 2_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 2718)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("AMV_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("AMV_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size the worker pool: {e}")))
}

fn run(cli: Cli) -> Result<bool, CliError> {
    init_threads()?;
    match cli.command {
        Command::Eval { config, seed, output } => commands::eval(&config, seed, &output).map(|_| true),
        Command::Verify { suite, config, seed, timing, output } => {
            commands::verify(&suite, config.as_deref(), seed, timing, &output)
        }
        Command::Green { config, output } => commands::green(&config, &output).map(|_| true),
        Command::Poisson { config, output } => commands::poisson(&config, &output).map(|_| true),
        Command::ExportOperator { config, output } => commands::export_operator(&config, &output).map(|_| true),
        Command::HeisenbergConstants { samples, seed, out } => {
            commands::heisenberg_constants(samples, seed, out.as_deref()).map(|_| true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        // Failed verification cases count as numerical failures.
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("amv: {e}");
            ExitCode::from(e.code())
        }
    }
}
