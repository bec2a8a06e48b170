//! `phtrack`: certify, simulate, export references and check matching
//! residuals for a scenario config.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "phtrack", version, about = "Contraction-based tracking for port-Hamiltonian systems")]
pub struct Cli {
    /// Scenario config (TOML).
    #[arg(long, global = true, default_value = "configs/ball_on_wheel.toml")]
    pub config: PathBuf,
    /// Output file: certificate report, trace CSV or reference CSV.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Integration step, overrides `sim.dt`.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Simulation horizon in seconds, overrides `sim.horizon`.
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    /// Sampling seed, overrides `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Simulate even if the certificate fails.
    #[arg(long = "unsafe", global = true)]
    pub unsafe_run: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the contraction conditions and print the certificate.
    Certify,
    /// Run the closed loop and write the trace.
    Simulate {
        /// Second run from a perturbed initial state.
        #[arg(long)]
        compare_out: Option<PathBuf>,
    },
    /// Export the reference trajectory.
    Reference,
    /// Report matching, feasibility and momentum residuals.
    MatchCheck,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("PHTRACK_LOG", "warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(commands::Status::Done) => ExitCode::SUCCESS,
        Ok(commands::Status::Rejected(reason)) => {
            eprintln!("rejected: {reason}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
