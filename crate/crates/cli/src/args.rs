use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use itsmlab::trainer::Schedule;
use itsmlab::MapSource;

#[derive(Debug, Parser)]
#[command(
    name = "itsmlab",
    version,
    about = "Similarity-map explainability for contrastive image-text features"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score maps with grid-search mIoU, mSC and mAP.
    Evaluate(EvaluateArgs),
    /// Train a new projection pair over masked-max-pooled tokens.
    Train(TrainArgs),
    /// Count channels shifted between max and average pooling.
    Diagnose(DiagnoseArgs),
    /// Write heatmap overlays for selected samples.
    Render(RenderArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated class names or indices to evaluate.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Clip,
    Rclip,
    Eclip,
}

impl From<Method> for MapSource {
    fn from(m: Method) -> Self {
        match m {
            Method::Clip => MapSource::Clip,
            Method::Rclip => MapSource::Rclip,
            Method::Eclip => MapSource::Eclip,
        }
    }
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long, value_enum, default_value_t = Method::Clip)]
    pub method: Method,
    /// Checkpoint directory written by `train`; required for eclip.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub map: MapArgs,
    /// Also write every map as a tensor under `itsm/`.
    #[arg(long)]
    pub emit_itsm: bool,
    /// Grid-search threshold step.
    #[arg(long, default_value_t = 0.01, allow_hyphen_values = true)]
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Constant,
    Cosine,
}

impl From<ScheduleArg> for Schedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Constant => Schedule::Constant,
            ScheduleArg::Cosine => Schedule::Cosine,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 1e-4, allow_hyphen_values = true)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2000)]
    pub max_steps: usize,
    /// Projected width; defaults to the text width.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Constant)]
    pub schedule: ScheduleArg,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub map: MapArgs,
    /// Skip the per-sample point images.
    #[arg(long)]
    pub no_points: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub map: MapArgs,
    /// Comma-separated sample ids; all samples when omitted.
    #[arg(long, value_delimiter = ',')]
    pub samples: Option<Vec<String>>,
    /// Heatmap weight when blending over a base image.
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FixtureArg {
    Aligned,
    AntiCorrelated,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FixtureArg::Aligned)]
    pub kind: FixtureArg,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Foreground classes (a background class is added).
    #[arg(long, default_value_t = 20)]
    pub num_classes: usize,
    #[arg(long, default_value_t = 32)]
    pub channels: usize,
    /// Token grid side length.
    #[arg(long, default_value_t = 8)]
    pub grid: usize,
    /// Store random original projections of this width.
    #[arg(long)]
    pub projection_dim: Option<usize>,
    /// Seed of the text bank and projections.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed of the sample stream; several splits can share one text bank.
    #[arg(long, default_value_t = 1)]
    pub sample_seed: u64,
    #[arg(long, default_value = "train")]
    pub split: String,
}
