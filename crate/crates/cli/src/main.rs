//! `spikesr`: synthesise, downsample, train, infer, evaluate, render and
//! inspect spiking super-resolution models for event streams.

mod commands;
mod config;
mod manifest;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spikesr::model::{ExecMode, Variant};

#[derive(Debug, Parser)]
#[command(name = "spikesr", version, about = "Event-stream super-resolution with SRM spiking networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a moving-bar corpus of high-resolution streams plus a manifest.
    Synth(SynthArgs),
    /// Write a 2x2-merged low-resolution twin (`.lr`) of each input stream.
    Downsample(DownsampleArgs),
    /// Train a network on the pairs listed in a manifest.
    Train(TrainArgs),
    /// Super-resolve a low-resolution stream with a trained checkpoint.
    Infer(InferArgs),
    /// Score predicted streams against ground truth.
    Eval(EvalArgs),
    /// Render a stream as PPM images (red = ON, blue = OFF).
    Render(RenderArgs),
    /// Print parameter counts, layer shapes, neuron settings and FLOPs.
    Info(InfoArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Number of streams.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// Sensor size as WIDTHxHEIGHT.
    #[arg(long, default_value = "32x32", value_parser = parse_size)]
    pub size: (u16, u16),
    /// Stream duration in milliseconds.
    #[arg(long, default_value_t = 64.0)]
    pub dur: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bar speed in pixels per millisecond.
    #[arg(long, default_value_t = spikesr::events::synth::DEFAULT_VELOCITY)]
    pub velocity: f64,
    /// Events fired by each pixel an edge crosses.
    #[arg(long, default_value_t = spikesr::events::synth::DEFAULT_EVENTS_PER_EDGE_PX)]
    pub events_per_px: u32,
}

#[derive(Debug, Args)]
pub struct DownsampleArgs {
    /// Stream files or directories of streams.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Write twins here instead of next to their sources.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Sensor size for header-less inputs, as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_size)]
    pub geometry: Option<(u16, u16)>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// INI file with [train], [model] and [data] sections; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `lr_path,hr_path` pairs, one per line.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub mode: Option<ExecMode>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulation steps per sample.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Simulation step in milliseconds.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Share of pairs held out for validation, taken from the manifest's end.
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Epoch report CSV; per-sample validation goes to `<stem>.val.csv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Low-resolution input stream.
    #[arg(long)]
    pub input: PathBuf,
    /// Output stream (`.evbin` or `.csv`).
    #[arg(long)]
    pub output: PathBuf,
    /// Defaults to the variant's native mode.
    #[arg(long)]
    pub mode: Option<ExecMode>,
    /// Fail unless the checkpoint holds this variant.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Simulation steps; defaults to the checkpoint's, else the input span.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted stream.
    #[arg(long, requires = "gt", conflicts_with = "manifest")]
    pub pred: Option<PathBuf>,
    /// Ground-truth stream.
    #[arg(long, requires = "pred")]
    pub gt: Option<PathBuf>,
    /// Batch mode: `pred_path,gt_path` pairs, one per line.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Evaluation window in steps; defaults to the span of both streams.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
    /// PSTH block length in milliseconds.
    #[arg(long, default_value_t = spikesr::metrics::DEFAULT_BLOCK_MS)]
    pub block_ms: f64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Image path; with `--every`, frames are `<stem>_0000.ppm`, ...
    #[arg(long)]
    pub out: PathBuf,
    /// Window start, in milliseconds after the first event.
    #[arg(long, default_value_t = 0.0)]
    pub start_ms: f64,
    /// Window length; defaults to the rest of the stream.
    #[arg(long)]
    pub window_ms: Option<f64>,
    /// Emit one frame per this many milliseconds.
    #[arg(long)]
    pub every: Option<f64>,
    /// Sensor size for header-less inputs, as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_size)]
    pub geometry: Option<(u16, u16)>,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Low-resolution input size for shapes and FLOPs, as HxWxT.
    #[arg(long, value_parser = parse_dims)]
    pub dims: Option<(usize, usize, usize)>,
}

fn parse_size(s: &str) -> Result<(u16, u16), String> {
    let (w, h) = s.split_once('x').ok_or_else(|| format!("expected WIDTHxHEIGHT, got '{s}'"))?;
    let w: u16 = w.trim().parse().map_err(|_| format!("bad width in '{s}'"))?;
    let h: u16 = h.trim().parse().map_err(|_| format!("bad height in '{s}'"))?;
    if w == 0 || h == 0 {
        return Err(format!("size must be positive, got '{s}'"));
    }
    Ok((w, h))
}

fn parse_dims(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split('x').collect();
    let [h, w, t] = parts.as_slice() else {
        return Err(format!("expected HxWxT, got '{s}'"));
    };
    let num = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad number '{v}' in '{s}'"));
    let (h, w, t) = (num(h)?, num(w)?, num(t)?);
    if h == 0 || w == 0 {
        return Err(format!("height and width must be positive in '{s}'"));
    }
    Ok((h, w, t))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Downsample(a) => commands::downsample(&a),
        Command::Train(a) => commands::train(&a),
        Command::Infer(a) => commands::infer(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Render(a) => commands::render(&a),
        Command::Info(a) => commands::info(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
