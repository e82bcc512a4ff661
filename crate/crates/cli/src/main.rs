//! `densemap`: density-map synthesis, estimation, detection, tracking and
//! evaluation from the command line.
//!
//! Exit status: 0 on success, 1 on invalid input or usage, 2 on I/O failure.

mod commands;
mod config;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use densemap::Result;

use commands::detect::DetectOpts;
use commands::estimator::{PredictOpts, TrainOpts};
use commands::eval::{EvalCountOpts, EvalDetOpts, EvalGameOpts, EvalQualityOpts};
use commands::pipeline::PipelineOpts;
use commands::simulate::SimulateOpts;
use commands::synth::SynthOpts;
use commands::track::{EvalTrackOpts, TrackOpts};
use config::{execute, resolve, Command};

#[derive(Parser)]
#[command(
    name = "densemap",
    version,
    about = "Crowd density maps: synthesis, estimation, detection, tracking and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Args)]
struct Common {
    /// JSON options file, or a manifest.json from an earlier run; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads for per-frame work
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Commands {
    /// Generate a synthetic annotated crowd scene
    Simulate {
        #[command(flatten)]
        opts: SimulateOpts,
        #[command(flatten)]
        common: Common,
    },
    /// Synthesize ground-truth density maps from dot annotations
    Synth {
        #[command(flatten)]
        opts: SynthOpts,
        #[command(flatten)]
        common: Common,
    },
    /// Train the patch ridge-regression density estimator
    #[command(name = "train-rr")]
    TrainRr {
        #[command(flatten)]
        opts: TrainOpts,
        #[command(flatten)]
        common: Common,
    },
    /// Predict density maps with a trained estimator
    Predict {
        #[command(flatten)]
        opts: PredictOpts,
        #[command(flatten)]
        common: Common,
    },
    /// Locate individual objects in density maps
    Detect {
        #[command(flatten)]
        opts: DetectOpts,
        #[command(flatten)]
        common: Common,
    },
    /// Track one target with a correlation filter, optionally fused with density
    Track {
        #[command(flatten)]
        opts: TrackOpts,
        #[command(flatten)]
        common: Common,
    },
    /// Counting errors (MAE, MSE)
    #[command(name = "eval-count")]
    EvalCount {
        #[command(flatten)]
        opts: EvalCountOpts,
        #[command(flatten)]
        common: Common,
    },
    /// Grid average mean absolute error per level
    #[command(name = "eval-game")]
    EvalGame {
        #[command(flatten)]
        opts: EvalGameOpts,
        #[command(flatten)]
        common: Common,
    },
    /// Per-pixel fidelity, compactness, localization and temporal smoothness
    #[command(name = "eval-quality")]
    EvalQuality {
        #[command(flatten)]
        opts: EvalQualityOpts,
        #[command(flatten)]
        common: Common,
    },
    /// Detection precision, recall, F1 and trajectory errors
    #[command(name = "eval-det")]
    EvalDet {
        #[command(flatten)]
        opts: EvalDetOpts,
        #[command(flatten)]
        common: Common,
    },
    /// Tracking error and precision curve
    #[command(name = "eval-track")]
    EvalTrack {
        #[command(flatten)]
        opts: EvalTrackOpts,
        #[command(flatten)]
        common: Common,
    },
    /// simulate, synth, detect and eval-det in one run
    Pipeline {
        #[command(flatten)]
        opts: PipelineOpts,
        #[command(flatten)]
        common: Common,
    },
}

fn go<C: Command>(flags: &C, common: &Common) -> Result<()> {
    let opts = resolve(flags, common.config.as_deref())?;
    execute(&opts, common.jobs)
}

fn dispatch(cmd: &Commands) -> Result<()> {
    match cmd {
        Commands::Simulate { opts, common } => go(opts, common),
        Commands::Synth { opts, common } => go(opts, common),
        Commands::TrainRr { opts, common } => go(opts, common),
        Commands::Predict { opts, common } => go(opts, common),
        Commands::Detect { opts, common } => go(opts, common),
        Commands::Track { opts, common } => go(opts, common),
        Commands::EvalCount { opts, common } => go(opts, common),
        Commands::EvalGame { opts, common } => go(opts, common),
        Commands::EvalQuality { opts, common } => go(opts, common),
        Commands::EvalDet { opts, common } => go(opts, common),
        Commands::EvalTrack { opts, common } => go(opts, common),
        Commands::Pipeline { opts, common } => go(opts, common),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("densemap: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
