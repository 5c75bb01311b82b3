//! `ladderforge` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 external tool failure.

mod compare;
mod config;
mod extract;
mod failure;
mod ladder_cmd;
mod plot;
mod sweep;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::Overrides;
use crate::failure::{CmdResult, EXIT_USAGE};

#[derive(Parser, Debug)]
#[command(name = "ladderforge", version, about = "Per-title bitrate ladders from source-side VIF features")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract pooled VIF feature tensors from Y4M videos
    Extract {
        #[arg(required = true)]
        videos: Vec<PathBuf>,
        /// Output feature CSV
        #[arg(short, long)]
        out: PathBuf,
        /// Video id (single input only; defaults to the file stem)
        #[arg(long)]
        id: Option<String>,
    },
    /// Train a quality model on the train split
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long = "encode-log")]
        encode_log: PathBuf,
        /// Split manifest (TOML); generated from the seed when absent
        #[arg(long)]
        split: Option<PathBuf>,
        /// Output model file
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Build the predicted ladder for one video
    Ladder {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long = "encode-log")]
        encode_log: PathBuf,
        /// Video id (required when the inputs hold several videos)
        #[arg(long)]
        video: Option<String>,
        /// Output ladder CSV
        #[arg(short, long)]
        out: PathBuf,
        /// Emit the raw per-rung argmax without monotonic correction
        #[arg(long)]
        no_correction: bool,
        /// Also realize this fixed ladder table (TOML)
        #[arg(long)]
        fixed: Option<PathBuf>,
        /// Also build the exhaustive-encoding reference ladder
        #[arg(long)]
        reference: bool,
    },
    /// BD-rate and BD-VMAF between ladders
    Compare {
        /// Test ladder CSV
        test: Option<PathBuf>,
        /// Anchor ladder CSV
        anchor: Option<PathBuf>,
        /// CSV with columns video_id,test,anchor for corpus mode
        #[arg(long, conflicts_with_all = ["test", "anchor"])]
        pairs: Option<PathBuf>,
        /// Video id for single-pair mode
        #[arg(long, default_value = "video")]
        video: String,
        /// Output report CSV
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Emit SVG plots with CSV twins
    Plot {
        #[command(subcommand)]
        kind: PlotKind,
    },
    /// Run an external encoder over the resolution x CRF grid
    EncodeSweep {
        video: PathBuf,
        #[arg(long)]
        id: Option<String>,
        /// Encode log to create or resume
        #[arg(short, long)]
        out: PathBuf,
        /// Command template; overrides the config
        #[arg(long)]
        command: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
        /// Directory for encoded files
        #[arg(long)]
        work_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum PlotKind {
    /// Histogram of a BD report column
    Hist {
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = Metric::BdRate)]
        metric: Metric,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Rate-quality curves of several ladders on a log-rate axis
    Hulls {
        #[arg(required = true)]
        ladders: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    BdRate,
    BdVmaf,
}

fn run(cli: Cli) -> CmdResult {
    let cfg = config::RunConfig::resolve(&cli.overrides)?;
    match cli.command {
        Command::Extract { videos, out, id } => extract::run(&cfg, &videos, &out, id),
        Command::Train {
            features,
            encode_log,
            split,
            out,
        } => train::run(&cfg, &features, &encode_log, split.as_deref(), &out),
        Command::Ladder {
            model,
            features,
            encode_log,
            video,
            out,
            no_correction,
            fixed,
            reference,
        } => ladder_cmd::run(
            &cfg,
            &ladder_cmd::Args {
                model,
                features,
                encode_log,
                video,
                out,
                correct: !no_correction,
                fixed,
                reference,
            },
        ),
        Command::Compare {
            test,
            anchor,
            pairs,
            video,
            out,
        } => compare::run(test, anchor, pairs, video, &out),
        Command::Plot { kind } => match kind {
            PlotKind::Hist { report, metric, out } => plot::hist(&report, metric, &out),
            PlotKind::Hulls { ladders, out, title } => plot::hulls(&ladders, &out, title),
        },
        Command::EncodeSweep {
            video,
            id,
            out,
            command,
            workers,
            work_dir,
        } => sweep::run(
            &cfg,
            &sweep::Args {
                video,
                id,
                out,
                command,
                workers,
                work_dir,
            },
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
