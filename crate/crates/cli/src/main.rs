//! `occbench` command-line front end.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod data;
mod error;
mod eval;
mod occlude;
mod output;
mod sweep;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use occbench::occlusion::{OccluderKind, Split};

use crate::config::PredictorEntry;

#[derive(Parser)]
#[command(name = "occbench", version, about = "Synthetic occlusion benchmark for 3D human pose estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command that reads a config file.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON run configuration; flags take precedence over its fields
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $OCCBENCH_OUT_DIR/<command>)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Base seed for every random stream of the run
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic stick-figure dataset
    SynthData(SynthDataArgs),
    /// Write a procedural occluder-object library
    SynthObjects(SynthObjectsArgs),
    /// Occlude every frame of a dataset at one degree
    Occlude(OccludeArgs),
    /// Produce training crops: geometric, occlusion, then photometric augmentation
    Augment(AugmentArgs),
    /// Score pose or heatmap predictions against a manifest
    Eval(EvalArgs),
    /// Robustness curves over occluder kinds and degrees
    Sweep(SweepArgs),
    /// Train x test matrix averaged over degrees 10 to 50%
    Matrix(SweepArgs),
    /// Occluded-pixel statistics of every occluder kind
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
pub struct SynthDataArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub frames: u64,
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u32).range(32..))]
    pub image_size: u32,
}

#[derive(Args)]
pub struct SynthObjectsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 24)]
    pub train: usize,
    #[arg(long, default_value_t = 24)]
    pub test: usize,
    /// Bitmap side, px
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(8..))]
    pub size: u32,
}

#[derive(Args)]
pub struct OccludeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub kind: Option<OccluderKind>,
    /// Target occluded fraction of the person box, in [0, 0.7]
    #[arg(long)]
    pub degree: Option<f64>,
    /// Object library directory, required for objects and mixture
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[arg(long, default_value_t = Split::Test)]
    pub split: Split,
    /// Occlude virtual-camera crops of this size instead of the full frames
    #[arg(long)]
    pub crop_size: Option<u32>,
}

#[derive(Args)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub kind: Option<OccluderKind>,
    #[arg(long)]
    pub degree: Option<f64>,
    /// Probability of occluding a frame
    #[arg(long)]
    pub probability: Option<f64>,
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[arg(long)]
    pub crop_size: Option<u32>,
}

#[derive(Args)]
#[group(id = "predictions", required = true, args = ["poses", "heatmaps"])]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// JSONL of {"frame_id", "joints_mm"} in camera coordinates
    #[arg(long)]
    pub poses: Option<PathBuf>,
    /// Directory of <frame_id:06>.vhm heatmap files
    #[arg(long)]
    pub heatmaps: Option<PathBuf>,
    /// `gt`, or a JSONL of {"frame_id", "root_depth_mm"}
    #[arg(long, default_value = "gt")]
    pub root_depth_source: String,
    /// Predictor label written into the records
    #[arg(long, default_value = "eval")]
    pub label: String,
    /// Leave the root joint out of the MPJPE mean
    #[arg(long)]
    pub exclude_root: bool,
    #[arg(long)]
    pub coverage: Option<f64>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub library: Option<PathBuf>,
    /// Occluder kinds, comma separated (default: all available)
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<OccluderKind>>,
    /// Degrees, comma separated (sweep only; default 0 to 0.7 by --degree-step)
    #[arg(long, value_delimiter = ',')]
    pub degrees: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.1)]
    pub degree_step: f64,
    /// `[label=]oracle | noisy_oracle:SIGMA | occlusion_mock:BASE,SENS[,RADIUS] | nn_baseline:MANIFEST`
    #[arg(long = "predictor", value_parser = config::parse_predictor)]
    pub predictors: Vec<PredictorEntry>,
    #[arg(long)]
    pub exclude_root: bool,
    #[arg(long)]
    pub crop_size: Option<u32>,
    #[arg(long)]
    pub coverage: Option<f64>,
}

#[derive(Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<OccluderKind>>,
    #[arg(long, value_delimiter = ',')]
    pub degrees: Option<Vec<f64>>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Square canvas side, px
    #[arg(long, default_value_t = 256)]
    pub canvas: u32,
    /// Person box `x,y,w,h` (default: centred, 0.43 x 0.8 of the canvas)
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub bbox: Option<Vec<f64>>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SynthData(a) => data::synth_data(a),
        Command::SynthObjects(a) => data::synth_objects(a),
        Command::Occlude(a) => occlude::occlude(a),
        Command::Augment(a) => occlude::augment(a),
        Command::Eval(a) => eval::eval(a),
        Command::Sweep(a) => sweep::sweep(a, false),
        Command::Matrix(a) => sweep::sweep(a, true),
        Command::Calibrate(a) => sweep::calibrate(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
