use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sqseg_core::nn::Variant;
use sqseg_core::pipeline::DEFAULT_PATCH_SIZE;

#[derive(Debug, Parser)]
#[command(
    name = "sqseg",
    version,
    about = "Squiggle-guided semantic segmentation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize inclusion/exclusion signals from ground-truth labels.
    Gensig(GensigArgs),
    /// Segment an image from squiggles.
    Segment(SegmentArgs),
    /// Score a predicted label map against ground truth.
    Eval(EvalArgs),
    /// Describe a network variant or a weight file.
    Inspect(InspectArgs),
    /// Write a randomly initialised weight container.
    InitWeights(InitWeightsArgs),
    /// Serve the interactive HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Weight container.
    #[arg(long, env = "SQSEG_WEIGHTS")]
    pub weights: Option<PathBuf>,
    /// Use the ground-truth oracle stub built from this label PNG instead
    /// of a network.
    #[arg(long, conflicts_with = "weights")]
    pub oracle: Option<PathBuf>,
    /// Class palette JSON; defaults to the five built-in classes.
    #[arg(long)]
    pub palette: Option<PathBuf>,
    /// Target stain statistics JSON (`{"mean": [..], "std": [..]}`).
    #[arg(long)]
    pub stain: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
    pub patch_size: usize,
}

#[derive(Debug, Args)]
pub struct GensigArgs {
    /// Label PNG, or a directory of them for a batch run.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long = "class")]
    pub class_id: u8,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Generator parameters JSON; `--seed` overrides its seed.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long, required_unless_present = "scene")]
    pub image: Option<PathBuf>,
    /// JSON list of squiggles.
    #[arg(long, required_unless_present = "scene", conflicts_with = "scene")]
    pub squiggles: Option<PathBuf>,
    /// Scene descriptor JSON; its image path is relative to the file.
    #[arg(long, conflicts_with = "image")]
    pub scene: Option<PathBuf>,
    /// Classes to segment; defaults to every squiggle class.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<u8>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Also write per-class probability tensors.
    #[arg(long)]
    pub probs: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Directory of `class_<id>.eutn` probability tensors, for AUC.
    #[arg(long)]
    pub probs: Option<PathBuf>,
    /// Directory for `metrics.json` and `metrics.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long, conflicts_with = "weights", default_value = "B0")]
    pub variant: Variant,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// List every parameter tensor.
    #[arg(long)]
    pub layers: bool,
}

#[derive(Debug, Args)]
pub struct InitWeightsArgs {
    #[arg(long, default_value = "B0")]
    pub variant: Variant,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Directory that request image paths are resolved against.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 16 << 20)]
    pub max_image_bytes: usize,
    /// Concurrent forward passes; defaults to the number of CPUs.
    #[arg(long)]
    pub workers: Option<usize>,
}
