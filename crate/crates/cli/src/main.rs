use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod bench;
mod commands;
mod detfile;
mod error;
mod manifest;
mod render;

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "detpipe", version, about = "Rail fastener detection pipeline")]
struct Cli {
    /// Flat key=value config applied over the fastener preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rescale images and their VOC annotations to the 800x1000 canvas.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Report failing files and continue with the rest.
        #[arg(long)]
        keep_going: bool,
    },
    /// Render synthetic scenes with annotations and a train/val manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the proposals for an image or a directory of images.
    Propose {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// CSV destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full detector and write a detections CSV.
    Detect {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a detections CSV against a directory of VOC files.
    Eval {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        iou: Option<f64>,
        /// Print CSV instead of the text table.
        #[arg(long)]
        csv: bool,
    },
    /// Median detect latency per proposal budget.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [300, 50])]
        rois: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        repeat: usize,
        /// Fail unless larger budgets are strictly slower.
        #[arg(long)]
        check: bool,
        /// Input image; a synthetic scene when absent.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Draw detection outlines onto an image.
    Render {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also draw class names.
        #[arg(long)]
        labels: bool,
    },
    /// Build the hand-set glyph weights and save them.
    Weights {
        #[arg(long)]
        out: PathBuf,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("DETPIPE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(format!("DETPIPE_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::Preprocess { input, out, keep_going } => commands::preprocess(cfg, &input, &out, keep_going),
        Command::Synth { out, count, seed } => commands::synth(cfg, &out, count, seed),
        Command::Propose { images, weights, out } => commands::propose(cfg, &images, weights.as_deref(), out.as_deref()),
        Command::Detect { images, weights, out } => commands::detect(cfg, &images, weights.as_deref(), out.as_deref()),
        Command::Eval { dets, gt, iou, csv } => commands::eval(cfg, &dets, &gt, iou, csv),
        Command::Bench {
            rois,
            repeat,
            check,
            image,
            weights,
        } => commands::bench(cfg, &rois, repeat, check, image.as_deref(), weights.as_deref()),
        Command::Render {
            image,
            dets,
            out,
            labels,
        } => commands::render(&image, &dets, &out, labels),
        Command::Weights { out } => commands::weights(cfg, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
