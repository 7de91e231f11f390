//! `stabwit`: batch front-end for the witness workbench.
//!
//! Every subcommand resolves its settings (config file, then flag
//! overrides), runs the campaign, and writes a run manifest plus data files
//! stamped with the manifest hash. Data files are byte-identical across
//! reruns of the same configuration and seed; only the manifest's recorded
//! wall time differs.
//!
//! Exit codes: 0 success, 2 configuration/parse problems, 1 runtime errors.

mod commands;
mod runctx;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::runctx::RunCtx;

#[derive(Parser)]
#[command(name = "stabwit", version, about = "Cluster-state witness and teleportation campaigns")]
struct Cli {
    /// Master seed; every campaign is deterministic given the seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 or absent: one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Directory for manifests and data files.
    #[arg(long, global = true, env = "STABWIT_OUT_DIR", default_value = "runs")]
    out_dir: PathBuf,

    /// Prefix for this run's output files.
    #[arg(long, global = true)]
    label: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic readout-noise model file.
    SynthModel(commands::SynthModelArgs),
    /// Estimate readout rates from calibration data and select a generator set.
    Calibrate(commands::CalibrateArgs),
    /// Run an entanglement-witness campaign on a cluster state.
    Witness(commands::WitnessArgs),
    /// Drive the teleportation wire, optionally scanning the perturbation angle.
    Teleport(commands::TeleportArgs),
    /// Hoeffding shot budget for a target error and confidence.
    Plan(commands::PlanArgs),
    /// Aggregate run summaries into one CSV table.
    Report(commands::ReportArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        if workers > 0 {
            // Ignore the error if a pool already exists (only possible in tests).
            let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
        }
    }
    let ctx = match RunCtx::new(cli.out_dir, cli.label, cli.seed) {
        Ok(ctx) => ctx,
        Err(err) => {
            eprintln!("error: cannot prepare output directory: {err}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::SynthModel(args) => commands::synth_model(&ctx, args),
        Command::Calibrate(args) => commands::calibrate(&ctx, args),
        Command::Witness(args) => commands::witness(&ctx, args),
        Command::Teleport(args) => commands::teleport(&ctx, args),
        Command::Plan(args) => commands::plan(&ctx, args),
        Command::Report(args) => commands::report(&ctx, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Configuration mistakes exit 2; everything that goes wrong while running
/// a well-formed request exits 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<stabwit_core::Error>() {
            return match core {
                stabwit_core::Error::Config(_) => 2,
                _ => 1,
            };
        }
    }
    1
}
