//! Argument declarations. Every tunable default mirrors
//! `illumest::defaults` so `--help` doubles as the defaults table.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use illumest::defaults;

#[derive(Debug, Parser)]
#[command(
    name = "illumest",
    version,
    about = "Illuminant estimation and white balance for linear RGB images"
)]
pub struct Cli {
    /// Worker threads for image-parallel stages.
    #[arg(long, global = true, env = "ILLUM_EST_JOBS")]
    pub jobs: Option<usize>,
    /// Print progress details to standard error.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate scene illuminants, one CSV row per image.
    Estimate(EstimateArgs),
    /// Train a model on images with ground-truth illuminants.
    Train(TrainArgs),
    /// Score an estimator against ground truth.
    Evaluate(EvaluateArgs),
    /// White-balance an image using an estimated illuminant.
    Correct(CorrectArgs),
    /// Render a synthetic dataset with known illuminants.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Grayness Index (learning-free).
    Gi,
    /// Learned chroma-histogram filtering (needs --model).
    Ffcc,
    /// Gray-world baseline.
    Grayworld,
}

/// Estimator selection plus its tuning knobs; shared by `estimate`,
/// `evaluate` and `correct`.
#[derive(Debug, Args)]
pub struct MethodArgs {
    /// Estimation method.
    #[arg(long, value_enum, default_value = "gi")]
    pub method: Method,
    /// Trained model file, required for --method ffcc.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Gaussian scale of the grayness filter, in pixels.
    #[arg(long, default_value_t = defaults::GI_SIGMA)]
    pub sigma: f64,
    /// Fraction of valid pixels kept as gray evidence.
    #[arg(long, default_value_t = defaults::GI_TOP_FRACTION)]
    pub top_fraction: f64,
    /// Lower bound on the number of selected gray pixels.
    #[arg(long, default_value_t = defaults::GI_MIN_PIXELS)]
    pub min_pixels: usize,
    /// Stabilizer for logs and the grayness normalizer.
    #[arg(long, default_value_t = defaults::GI_EPSILON)]
    pub epsilon: f64,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Image file, or directory of .png/.ppm images.
    pub input: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the input's intensity chroma histogram to this file
    /// (single-image input only).
    #[arg(long)]
    pub dump_histogram: Option<PathBuf>,
    /// key=value file supplying defaults for the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory holding the training images.
    #[arg(long)]
    pub data: PathBuf,
    /// Ground-truth CSV (header `image,r,g,b`).
    #[arg(long)]
    pub gt: PathBuf,
    /// Where to write the trained model.
    #[arg(long)]
    pub out: PathBuf,
    /// Gradient-descent step size.
    #[arg(long, default_value_t = defaults::LEARNING_RATE)]
    pub learning_rate: f64,
    /// Momentum coefficient in [0, 1).
    #[arg(long, default_value_t = defaults::MOMENTUM)]
    pub momentum: f64,
    /// Full-batch epochs.
    #[arg(long, default_value_t = defaults::EPOCHS)]
    pub epochs: usize,
    /// L2 penalty on the filters.
    #[arg(long, default_value_t = defaults::L2_FILTER)]
    pub l2_filter: f64,
    /// L2 penalty on the bias.
    #[arg(long, default_value_t = defaults::L2_BIAS)]
    pub l2_bias: f64,
    /// Training seed (reserved; the default optimizer is deterministic).
    #[arg(long, default_value_t = defaults::SEED)]
    pub seed: u64,
    /// Histogram bins per axis (power of two).
    #[arg(long, default_value_t = defaults::HIST_BINS)]
    pub bins: usize,
    /// Histogram bin size in log-chroma units.
    #[arg(long, default_value_t = defaults::HIST_BIN_SIZE)]
    pub bin_size: f64,
    /// key=value file supplying defaults for the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory holding the evaluation images.
    #[arg(long)]
    pub data: PathBuf,
    /// Ground-truth CSV (header `image,r,g,b`).
    #[arg(long)]
    pub gt: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    /// k-fold cross-validation; ffcc retrains per fold with default
    /// training settings.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Seed for the fold shuffle.
    #[arg(long, default_value_t = defaults::SEED)]
    pub seed: u64,
    /// Emit the report as JSON instead of CSV.
    #[arg(long)]
    pub json: bool,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value file supplying defaults for the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrectArgs {
    /// Image to white-balance.
    pub input: PathBuf,
    /// Output image (16-bit PNG).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    /// key=value file supplying defaults for the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for img_XXXXX.png files plus gt.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of scenes to render.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Dataset seed.
    #[arg(long, default_value_t = defaults::SEED)]
    pub seed: u64,
    /// key=value file of randomization ranges (see README).
    #[arg(long)]
    pub config: Option<PathBuf>,
}
