//! `normsolve`: normalized solutions of the critical Schrödinger equation on
//! balls from the command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::CommonArgs;

#[derive(Parser, Debug)]
#[command(name = "normsolve", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sobolev constant, first eigenvalue and the coupling thresholds.
    Thresholds(CommonArgs),
    /// Norms of truncated Aubin–Talenti bubbles and their decay exponents.
    Bubbles(CommonArgs),
    /// Local minimizer inside the trapping ball.
    SolveMin(CommonArgs),
    /// Mountain-pass saddle above the local minimizer.
    SolveMp(CommonArgs),
    /// Local-minimum and mountain-pass levels over a coupling grid.
    Curve(CommonArgs),
    /// Certify a stored solution.
    Check {
        /// Snapshot written by solve-min or solve-mp.
        snapshot: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Why a run did not exit cleanly.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or arguments; exit status 2.
    Usage(String),
    /// A solver or I/O step failed; exit status 1 with a diagnostic.
    Solver {
        stage: &'static str,
        message: String,
    },
    /// The run completed but an asserted invariant failed; the summary has
    /// already been emitted. Exit status 1.
    Invariants,
}

impl Failure {
    pub fn solver(stage: &'static str, err: normsolve::error::Error) -> Self {
        match err {
            normsolve::error::Error::InvalidArgument(m) => Failure::Usage(m),
            other => Failure::Solver {
                stage,
                message: other.to_string(),
            },
        }
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("NORMSOLVE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::Usage(format!(
            "NORMSOLVE_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot size the thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), Failure> {
    init_threads()?;
    match cli.command {
        Command::Thresholds(a) => commands::thresholds(&a),
        Command::Bubbles(a) => commands::bubbles(&a),
        Command::SolveMin(a) => commands::solve_min(&a),
        Command::SolveMp(a) => commands::solve_mp(&a),
        Command::Curve(a) => commands::curve(&a),
        Command::Check { snapshot, common } => commands::check(&snapshot, &common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("normsolve: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver { stage, message }) => {
            let diag = json!({ "status": "error", "stage": stage, "error": message });
            println!(
                "{}",
                serde_json::to_string_pretty(&diag).unwrap_or_default()
            );
            ExitCode::from(1)
        }
        Err(Failure::Invariants) => ExitCode::from(1),
    }
}
