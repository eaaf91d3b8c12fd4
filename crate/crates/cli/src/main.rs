//! `triflex`: run formation scenarios, reproduce the reference figures, and inspect
//! linear stability from the command line.
//!
//! Exit codes: 0 success, 1 configuration error, 2 degeneracy abort, 3 selftest failure.

mod commands;
mod output;
mod scenario_file;

use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{FaultArg, Figure};

#[derive(Debug, Parser)]
#[command(
    name = "triflex",
    version,
    about = "Three-agent formations with biased range measurements"
)]
struct Cli {
    /// Directory for trajectory CSV and report files (default: current directory).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario file and write `<stem>.csv` and `<stem>.json`.
    Run { file: PathBuf },
    /// Run one of the built-in reference scenarios.
    Figure {
        #[arg(value_enum)]
        name: Figure,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the Jacobian at the target shape, its eigenvalues and the Hurwitz verdict.
    Analyze {
        #[arg(long, allow_negative_numbers = true)]
        d1: f64,
        #[arg(long, allow_negative_numbers = true)]
        d2: f64,
        /// Target angle in radians; 0 selects the collinear system.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        theta: f64,
        #[arg(long, allow_negative_numbers = true)]
        c: f64,
    },
    /// Hurwitz check over a grid of target angles, as CSV on stdout.
    SweepTheta {
        #[arg(long, allow_negative_numbers = true)]
        d1: f64,
        #[arg(long, allow_negative_numbers = true)]
        d2: f64,
        #[arg(long, allow_negative_numbers = true)]
        c: f64,
        /// Grid spacing in radians.
        #[arg(long, default_value_t = PI / 36.0)]
        step: f64,
        /// Required distance of every eigenvalue from the imaginary axis.
        #[arg(long, default_value_t = 0.0)]
        margin: f64,
    },
    /// Check every invariant of the toolkit and report each one.
    Selftest {
        /// Deliberately break part of the analysis to confirm the suite notices.
        #[arg(long, value_enum)]
        fault: Option<FaultArg>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap's own usage-error code (2) would collide with the abort code
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let out = cli.out.as_deref();
    let result = match cli.command {
        Command::Run { file } => commands::cmd_run(&file, out),
        Command::Figure { name, seed } => commands::cmd_figure(name, seed, out),
        Command::Analyze { d1, d2, theta, c } => commands::cmd_analyze(d1, d2, theta, c),
        Command::SweepTheta {
            d1,
            d2,
            c,
            step,
            margin,
        } => commands::cmd_sweep_theta(d1, d2, c, step, margin, out),
        Command::Selftest { fault } => commands::cmd_selftest(fault),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
