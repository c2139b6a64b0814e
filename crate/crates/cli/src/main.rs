//! `laneaf`: encode, decode, check, score and render lane affinity fields.
//!
//! Exit codes: 0 success, 1 validation or contract failure, 2 I/O or format
//! error.

mod commands;
mod config;
mod overlay;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] laneaf_core::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Format(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_io_or_format() => 2,
            CliError::Io(_) | CliError::Format(_) => 2,
            CliError::Core(_) | CliError::Invalid(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "laneaf", version, about = "Lane affinity field codec")]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode a label mask (PGM) into LAF1 fields.
    Encode(EncodeArgs),
    /// Decode a binary mask plus fields into a label mask.
    Decode(DecodeArgs),
    /// Encode, decode and compare label masks; exits 1 below --min-agreement.
    Roundtrip(RoundtripArgs),
    /// Score predicted lanes against ground truth.
    Eval(EvalArgs),
    /// Evaluate the training losses on stored targets and predictions.
    Loss(LossArgs),
    /// Generate a synthetic lane scene.
    Synth(SynthArgs),
    /// Add angular noise to fields and flip noise to a binary mask.
    Perturb(PerturbArgs),
    /// Time decoding on a synthetic scene.
    Bench(BenchArgs),
    /// Render a label mask or lane JSON as a color PPM.
    Overlay(OverlayArgs),
}

#[derive(Debug, Args)]
pub struct DecodeFlags {
    /// Association error threshold in pixels.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Erase lanes with fewer pixels.
    #[arg(long)]
    pub min_lane_pixels: Option<usize>,
    /// Keep only the largest N lanes.
    #[arg(long)]
    pub max_lanes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    pub mask: PathBuf,
    pub out_fields: PathBuf,
    /// Also write the binary mask (0/255 PGM).
    #[arg(long)]
    pub bw: Option<PathBuf>,
    /// Store VAF as (sign(dx), -1) instead of a unit vector.
    #[arg(long)]
    pub literal_vaf: bool,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    pub bw: PathBuf,
    pub fields: PathBuf,
    pub out_mask: PathBuf,
    #[command(flatten)]
    pub decode: DecodeFlags,
    /// Write decoded lanes as JSON.
    #[arg(long)]
    pub lanes_json: Option<PathBuf>,
    /// Write a human-readable decode trace (`-` for stdout).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RoundtripArgs {
    #[arg(required = true)]
    pub masks: Vec<PathBuf>,
    #[command(flatten)]
    pub decode: DecodeFlags,
    /// Lowest pixel agreement accepted as success.
    #[arg(long)]
    pub min_agreement: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Point,
    Iou,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted lanes: label mask PGM or lane JSON.
    pub pred: PathBuf,
    /// Ground-truth lanes: label mask PGM or lane JSON.
    pub gt: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalMode::Iou)]
    pub mode: EvalMode,
    /// Image size, required when both inputs are JSON.
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub point_tolerance: Option<f64>,
    #[arg(long)]
    pub lane_accuracy_threshold: Option<f64>,
    #[arg(long)]
    pub lane_width: Option<usize>,
    #[arg(long)]
    pub iou_threshold: Option<f64>,
    /// Comma-separated row anchors for point mode.
    #[arg(long, value_delimiter = ',')]
    pub row_anchors: Option<Vec<usize>>,
    /// Also report the exhaustive optimum (up to 6 lanes per side).
    #[arg(long)]
    pub exhaustive: bool,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Binary targets (PGM, nonzero is 1).
    #[arg(long)]
    pub targets: PathBuf,
    /// Predicted probabilities (PGM, value / 255).
    #[arg(long)]
    pub outputs: PathBuf,
    /// Target fields (LAF1).
    #[arg(long)]
    pub af_targets: PathBuf,
    /// Predicted fields (LAF1).
    #[arg(long)]
    pub af_preds: PathBuf,
    /// Pixels scored by the field loss; defaults to the targets.
    #[arg(long)]
    pub fg_mask: Option<PathBuf>,
    /// Foreground weight.
    #[arg(long)]
    pub w: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output label mask (PGM).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write encoded fields.
    #[arg(long)]
    pub fields: Option<PathBuf>,
    /// Also write the binary mask.
    #[arg(long)]
    pub bw: Option<PathBuf>,
    /// Also write lanes as JSON.
    #[arg(long)]
    pub lanes_json: Option<PathBuf>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub lanes: Option<usize>,
    #[arg(long)]
    pub thickness: Option<usize>,
    #[arg(long)]
    pub min_separation: Option<usize>,
    #[arg(long)]
    pub max_bend: Option<f64>,
    /// Dash period in rows; enables dashed lanes.
    #[arg(long)]
    pub dash_period: Option<usize>,
    /// Fraction of each dash period that is painted.
    #[arg(long, requires = "dash_period")]
    pub dash_duty: Option<f64>,
    /// Make one adjacent pair meet at the minimum separation in the top row.
    #[arg(long)]
    pub converge: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    pub fields: PathBuf,
    pub out_fields: PathBuf,
    /// Binary mask to perturb alongside.
    #[arg(long, requires = "bw_out")]
    pub bw: Option<PathBuf>,
    #[arg(long, requires = "bw")]
    pub bw_out: Option<PathBuf>,
    /// Rotation standard deviation in degrees.
    #[arg(long)]
    pub angle_sigma: Option<f64>,
    /// Per-pixel mask flip probability.
    #[arg(long)]
    pub flip_prob: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub lanes: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub decode: DecodeFlags,
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    /// Label mask PGM or lane JSON.
    pub input: PathBuf,
    /// Output PPM.
    pub out: PathBuf,
    /// Binary mask drawn as the gray background.
    #[arg(long)]
    pub bw: Option<PathBuf>,
    /// Image size for JSON input without --bw.
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Stroke width for JSON lanes.
    #[arg(long, default_value_t = 1)]
    pub lane_width: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
