//! `obflow` — numerical experiments for a fourth-order conformal curvature
//! flow on periodic four-dimensional grids.
//!
//! Usage: `obflow <experiment> --config <file> [--out <dir>]`. The config
//! is a TOML file with a documented schema (see the library's io module);
//! every run writes its artifacts plus a `manifest.toml` that reproduces
//! the run bitwise when passed back as `--config`.
//!
//! Exit status: 0 for completed experiments (including numerical stops
//! such as a curvature blow-up, whose reason lands in the manifest); 2 for
//! configuration and schema errors; 1 for everything else.

use clap::{Args, Parser, Subcommand};
use obflow_core::io::ExperimentKind;
use obflow_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;

mod experiments;
mod table;

#[derive(Parser)]
#[command(
    name = "obflow",
    version,
    about = "Numerical laboratory for a fourth-order conformal curvature flow on periodic 4D grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML). A manifest.toml written by a previous run
    /// is also accepted and reproduces that run.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Output directory; overrides out_dir from the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the curvature stack on one metric and check its tensor identities.
    CheckIdentities(RunArgs),
    /// Evaluate curvature on an analytic chart and compare with closed forms.
    ChartCheck(RunArgs),
    /// Evolve initial data and store the trajectory with diagnostics.
    Flow(RunArgs),
    /// Parabolically rescale a trajectory and verify it still solves the flow.
    Rescale(RunArgs),
    /// Compare the variation of the total Q integral with its claimed gradient.
    GradientCheck(RunArgs),
    /// Measure the linearized decay rate of a single Fourier mode.
    ModeDecay(RunArgs),
    /// Fit short-time curvature-derivative smoothing constants along a run.
    SmoothingProbe(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::CheckIdentities(a) => (ExperimentKind::CheckIdentities, a),
        Command::ChartCheck(a) => (ExperimentKind::ChartCheck, a),
        Command::Flow(a) => (ExperimentKind::Flow, a),
        Command::Rescale(a) => (ExperimentKind::Rescale, a),
        Command::GradientCheck(a) => (ExperimentKind::GradientCheck, a),
        Command::ModeDecay(a) => (ExperimentKind::ModeDecay, a),
        Command::SmoothingProbe(a) => (ExperimentKind::SmoothingProbe, a),
    };
    match experiments::run(kind, &args.config, args.out.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::ConfigParse(_) | Error::BadConfig(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
