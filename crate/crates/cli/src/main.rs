//! `dcgrid`: equilibrium, eigenvalue, simulation and sweep studies of a
//! droop-controlled dc microgrid.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dcgrid_core::sweep::Criterion;
use dcgrid_core::GridError;

use crate::config::RunConfig;

/// Exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_UNSTABLE: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "dcgrid",
    version,
    about = "Stability studies of droop-controlled dc microgrids"
)]
pub struct Cli {
    /// Run configuration (TOML). Sweep commands accept several, one per operating point.
    #[arg(long, global = true)]
    pub config: Vec<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Worker threads for sweeps (default: available parallelism).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Use the block-structured Jacobian instead of the exact one.
    #[arg(long, global = true)]
    pub paper_structure: bool,

    /// Stability criterion for `sweep-minc`.
    #[arg(long, global = true, default_value = "ssasc")]
    pub criterion: Criterion,

    /// Print the normalized configuration and exit.
    #[arg(long)]
    pub dump_config: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the operating point; writes equilibrium.csv.
    Equilibrium,
    /// Eigenvalue test; writes eigs.csv. Exit 3 when unstable.
    Assess,
    /// Perturb the equilibrium and integrate; writes trajectory.csv. Exit 3 when unstable.
    Simulate,
    /// Load step from the equilibrium; writes trajectory.csv.
    StepLoad,
    /// Minimum capacitance per (L, D); writes minc.csv.
    SweepMinc,
    /// r_max over the (C, L, D) grid for every config; writes rmax.csv.
    SweepRmax,
    /// Smallest delay for which the eigenvalue test is sufficient; writes tau.csv.
    TuneTau,
    /// Render a sweep CSV as SVG.
    Plot { input: PathBuf, output: PathBuf },
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("DCGRID_LOG", "warn");
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init();
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<GridError>() {
        Some(
            GridError::NoPhysicalRoot { .. }
            | GridError::BatteryOverload { .. }
            | GridError::DegenerateDroop { .. },
        ) => EXIT_INFEASIBLE,
        _ => EXIT_ERROR,
    }
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    let configs = cli
        .config
        .iter()
        .map(|p| RunConfig::load(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if cli.dump_config {
        for cfg in &configs {
            print!("{}", cfg.to_toml()?);
        }
        return Ok(EXIT_OK);
    }
    let Some(command) = &cli.command else {
        anyhow::bail!("no subcommand given (see --help)");
    };
    commands::dispatch(cli, command, &configs)
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
