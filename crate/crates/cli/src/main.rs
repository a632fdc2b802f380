use std::path::PathBuf;
use std::process::ExitCode;

use calfuse::calibration::DEFAULT_BINS;
use calfuse::fusion::{FusionMethod, DEFAULT_EPSILON};
use calfuse::metrics::DEFAULT_POSITIVE;
use calfuse::tensor_store::Split;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

mod commands;

/// Calibration-weighted ensemble fusion for segmentation probability maps.
#[derive(Debug, Parser)]
#[command(name = "calfuse", version)]
struct Cli {
    /// Worker threads for per-image work (0 = one per core). Never changes
    /// output bytes.
    #[arg(long, global = true, env = "CALFUSE_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset: masks, per-model probability maps, manifest.
    Synth(SynthArgs),
    /// Write a calibration report and reliability CSV for every model.
    Calibrate(CalibrateArgs),
    /// Fuse member predictions with one or more voting methods.
    Fuse(FuseArgs),
    /// Score one model or a directory of fused masks against ground truth.
    Evaluate(EvaluateArgs),
    /// Colour a prediction against its ground truth.
    Overlay(OverlayArgs),
    /// Tabulate evaluation reports side by side.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON synthetic spec; defaults to the built-in five-model pool.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = Split::Validation)]
    split: Split,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FuseArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = Split::Testing)]
    split: Split,
    /// Comma-separated: majority, weighted_ece, weighted_mce, mvem.
    #[arg(long, value_delimiter = ',', required = true)]
    method: Vec<FusionMethod>,
    /// Comma-separated model ids; defaults to every model in the manifest.
    #[arg(long, value_delimiter = ',')]
    members: Option<Vec<String>>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// Directory of `<model>.calibration.json` validation reports. Without
    /// it, members are calibrated on the validation split first.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = Split::Testing)]
    split: Split,
    /// Evaluate this model's argmax masks.
    #[arg(
        long,
        conflicts_with = "predictions",
        required_unless_present = "predictions"
    )]
    model: Option<String>,
    /// Directory of `<image_id>.png` masks, with optional `<image_id>.cbpm`.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Report name; defaults to the model id or the directory name.
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value_t = DEFAULT_POSITIVE)]
    positive_class: u8,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OverlayArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = DEFAULT_POSITIVE)]
    positive_class: u8,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory holding `*.eval.json` files.
    #[arg(long)]
    evals: PathBuf,
    /// Also write `comparison.txt` and `comparison.csv` here.
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

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
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start {} worker threads: {e}", cli.threads);
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match pool.install(|| commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { EXIT_USAGE } else { EXIT_DATA })
        }
    }
}
