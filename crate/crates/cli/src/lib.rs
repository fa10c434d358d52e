//! Command-line front end: JSON configurations in, CSV/SVG results and a
//! JSON manifest out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use commands::{Common, Failure};

#[derive(Debug, Parser)]
#[command(
    name = "elastica",
    version,
    about = "Shape programming for magnetized cantilever beams"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Equilibrium shape for a given field and magnetization profile.
    SolveState(Flags),
    /// Optimal magnetization and fields for a set of target shapes.
    Program(Flags),
    /// Exact design that makes a target shape an equilibrium.
    Attain(Flags),
    /// Post-buckling branch under an antiparallel field.
    Bifurcate(Flags),
    /// Regularity audit of a `program` output directory.
    Check(Flags),
    /// Attainment error as epsilon = gamma decreases.
    Sweep(Flags),
}

#[derive(Debug, Clone, Args)]
pub struct Flags {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Number of grid cells (overrides the configuration).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Suppress the summary line.
    #[arg(long)]
    pub quiet: bool,
}

/// Caps the global thread pool from `ELASTICA_THREADS`.
fn init_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("ELASTICA_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .with_context(|| format!("ELASTICA_THREADS = {value:?} is not a count"))?;
    if n == 0 {
        return Err(anyhow!("ELASTICA_THREADS must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

type CommandFn = fn(&Common) -> Result<commands::Outcome, Failure>;

pub fn run(cli: Cli) -> ExitCode {
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    let (flags, f): (&Flags, CommandFn) = match &cli.command {
        Command::SolveState(a) => (a, commands::solve_state_cmd),
        Command::Program(a) => (a, commands::program_cmd),
        Command::Attain(a) => (a, commands::attain_cmd),
        Command::Bifurcate(a) => (a, commands::bifurcate_cmd),
        Command::Check(a) => (a, commands::check_cmd),
        Command::Sweep(a) => (a, commands::sweep_cmd),
    };
    let common = Common {
        config: flags.config.clone(),
        grid: flags.grid,
        out: flags.out.clone(),
    };
    match f(&common) {
        Ok(outcome) => {
            if !flags.quiet {
                println!("{}", outcome.summary);
            }
            if outcome.exit_code() != 0 {
                eprintln!("warning: {}", outcome.summary);
            }
            ExitCode::from(outcome.exit_code())
        }
        Err(failure) => {
            let kind = match failure {
                Failure::Config(_) => "config error",
                Failure::Solver(_) => "solver error",
            };
            eprintln!("{kind}: {:#}", failure.error());
            ExitCode::from(failure.exit_code())
        }
    }
}
