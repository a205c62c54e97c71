//! `qnlchain`: stability scans, critical strains, equilibrium radii,
//! ghost forces, error sweeps and the model summary table.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 usage error,
//! 3 numerical failure (instability, no root in bracket, ...).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "qnlchain", version, about = "Stability and error analysis of atomistic, Cauchy-Born and QNL chain models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON file with default options; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the merged configuration as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(flatten)]
    opts: RunConfig,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Numeric and closed-form stability infima over an F grid.
    Stability,
    /// Critical strains of the tension and buckling branches.
    Critical,
    /// Uniform circular equilibria of the atomistic and Cauchy-Born models.
    Equilibrium,
    /// Ghost-force norms at uniform chains.
    Ghost,
    /// Linearized error sweep over N with rate fit and bounds.
    Sweep,
    /// Stability conditions and error orders of all models.
    Summary,
    /// Runs the full acceptance suite.
    Selfcheck,
}

/// Invalid input from the user; exits with code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    CheckFailed,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<qnlchain::Error>() {
        Some(qnlchain::Error::Argument(_) | qnlchain::Error::Precondition(_) | qnlchain::Error::Geometry(_)) => 2,
        Some(_) => 3,
        None => 3,
    }
}

fn configure_threads() -> Result<(), Usage> {
    let Ok(v) = std::env::var("QNLCHAIN_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Usage(format!("QNLCHAIN_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Usage(format!("cannot size thread pool: {e}")))
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    configure_threads()?;
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = base.overlay(&cli.opts);
    if cli.print_config {
        println!("{}", cfg.canonical_json());
        return Ok(Status::Ok);
    }
    match cli.command {
        Command::Stability => commands::stability(&cfg),
        Command::Critical => commands::critical(&cfg),
        Command::Equilibrium => commands::equilibrium(&cfg),
        Command::Ghost => commands::ghost(&cfg),
        Command::Sweep => commands::sweep(&cfg),
        Command::Summary => commands::summary(&cfg),
        Command::Selfcheck => commands::selfcheck(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
