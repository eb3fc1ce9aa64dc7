use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use flamestab::imaging::BoundingBox;
use flamestab::pipeline::LabelGranularity;

mod commands;
mod corpus;

/// Usage errors, including missing input directories.
const EXIT_USAGE: u8 = 64;
/// Any other failure. `flsc` uses 0..=2 for its labels.
const EXIT_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "flamestab", version, about = "Flame stability classification for flame spray pyrolysis video")]
struct Cli {
    /// Log level for diagnostics on stderr.
    #[arg(long, global = true, default_value = "warn")]
    log: tracing::Level,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct FlscArgs {
    /// Anchor box as left,bottom_offset,width,height (pixels, origin bottom-left).
    #[arg(long = "box", value_name = "L,B,W,H", default_value = "450,270,30,50")]
    bbox: BoundingBox,

    /// Relative-deviation thresholds as uncertain,unstable.
    #[arg(long, value_name = "UNCERTAIN,UNSTABLE", value_parser = parse_thresholds, default_value = "0.15,0.25")]
    thresholds: (f64, f64),
}

fn parse_thresholds(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected UNCERTAIN,UNSTABLE")?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(a)?, parse(b)?))
}

#[derive(Subcommand)]
enum Command {
    /// Classify one clip with the luminance-fluctuation rule; exit code 0 stable, 1 uncertain, 2 unstable.
    Flsc {
        clip_dir: PathBuf,
        #[command(flatten)]
        flsc: FlscArgs,
        /// Write per-frame deviations here as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit PCA and k-means to every clip directory under CORPUS_DIR.
    Train {
        corpus_dir: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flsc: FlscArgs,
        #[arg(long, default_value_t = 30)]
        window_len: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        /// How training windows get their FLSC label.
        #[arg(long, default_value = "window")]
        label_granularity: LabelGranularity,
    },
    /// Per-window and whole-clip labels from a trained model.
    Classify { model: PathBuf, clip_dir: PathBuf },
    /// Classify a live FSPV frame stream, one NDJSON record per window.
    Monitor {
        model: PathBuf,
        /// `stdin` or a file path.
        #[arg(long, default_value = "stdin")]
        stream: String,
    },
    /// Score prediction files against rater consensus.
    Evaluate {
        /// CSV with video_id,rater_id,score.
        #[arg(long)]
        truth: PathBuf,
        /// CSV with video_id,prediction; optionally prefixed NAME=.
        #[arg(long = "pred", required = true)]
        preds: Vec<String>,
        #[arg(long)]
        out_report: Option<PathBuf>,
        /// Long-form per-video predictions including the human consensus.
        #[arg(long)]
        out_fig8: Option<PathBuf>,
    },
    /// Accuracy of random guessing against the truth labels.
    Baseline {
        #[arg(long, conflicts_with_all = ["stable", "unstable"], required_unless_present_all = ["stable", "unstable"])]
        truth: Option<PathBuf>,
        #[arg(long, requires = "unstable")]
        stable: Option<usize>,
        #[arg(long, requires = "stable")]
        unstable: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Render a scenario JSON file into a clip directory.
    Synth {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flsc: FlscArgs,
    },
    /// Write a corpus of steady and extinction clips plus a truth table.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stable: usize,
        #[arg(long)]
        unstable: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 90)]
        frames: usize,
        #[arg(long, default_value_t = 640)]
        width: usize,
        #[arg(long, default_value_t = 480)]
        height: usize,
        /// Anchor box; the flame is rendered around it.
        #[arg(long = "box", value_name = "L,B,W,H", default_value = "450,270,30,50")]
        bbox: BoundingBox,
    },
    /// PC coordinates and cluster of every window, plus the centroids.
    Project {
        model: PathBuf,
        corpus_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict every clip of a corpus with a named method.
    Predict {
        corpus_dir: PathBuf,
        #[arg(long, default_value = "flsc")]
        method: String,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        flsc: FlscArgs,
    },
    /// Write a clip directory to stdout as an FSPV stream.
    Stream { clip_dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(cli.log)
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .init();

    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(EXIT_USAGE)
        }
        Err(commands::Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
