//! `fracuc`: fit, decompose, simulate and diagnose fractional trend-cycle
//! models from CSV data.
//!
//! Exit codes: 0 on success, 2 for invalid input, arguments or documents,
//! 3 when the numerics fail on valid input.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod coeffs;
mod commands;
mod doc;
mod error;
mod ingest;
mod period;

use clap::{Parser, Subcommand};

use crate::commands::{DecomposeArgs, FitArgs, GphArgs, McArgs, SimulateArgs};

#[derive(Debug, Parser)]
#[command(
    name = "fracuc",
    version,
    about = "Fractional trend-cycle decomposition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate a model by maximum likelihood and write a fit document.
    Fit(FitArgs),
    /// Filtered trend and cycle of a fitted series.
    Decompose(DecomposeArgs),
    /// Simulate a path from fitted or given parameters.
    Simulate(SimulateArgs),
    /// Monte Carlo accuracy of the estimator at given parameters.
    Mc(McArgs),
    /// Log-periodogram estimate of the memory parameter.
    Gph(GphArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Decompose(a) => commands::decompose(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Mc(a) => commands::mc(a),
        Command::Gph(a) => commands::gph(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
