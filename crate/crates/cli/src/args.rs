//! Command-line definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "seeker",
    version,
    about = "Turn point annotations on satellite scenes into box labels, datasets and scores",
    args_override_self = true
)]
pub struct Cli {
    /// Flat `key = value` file; keys mirror the long flags of the subcommand.
    /// Flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads (default: logical cores). Output does not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert scenes to 8 bit, tile them and keep patches with annotations.
    Preprocess(PreprocessArgs),
    /// Generate box labels for every patch.
    Label(LabelArgs),
    /// Split labeled patches and lay out the detection dataset.
    Dataset(DatasetArgs),
    /// Score prediction files against ground truth.
    Eval(EvalArgs),
    /// Find the confidence threshold that maximizes certain-whale F1.
    Sweep(SweepArgs),
    /// Class-agnostic confusion matrix with a background class.
    Confusion(ConfusionArgs),
    /// Generate synthetic patches, points, ground truth and predictions.
    Synth(SynthArgs),
    /// Run the label review HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Directory of scene rasters (`.png`, `.tif`), each with a `<stem>.meta` sidecar.
    #[arg(long)]
    pub scenes: PathBuf,
    /// Expert point CSV: `ann_id,scene_id,x,y,class`.
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Percentile-stretch 16-bit scenes to 8 bit (required for 16-bit input).
    #[arg(long)]
    pub stretch: bool,
    #[arg(long, default_value_t = 1.0)]
    pub p_low: f64,
    #[arg(long, default_value_t = 99.0)]
    pub p_high: f64,
    /// Patch side in pixels; defaults to 320 at 0.3 m and 192 at 0.46 m.
    #[arg(long)]
    pub patch_size: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Synthetic,
    Fixture,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BufferModeArg {
    HalfExtent,
    FullSide,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Output of `preprocess` or `synth` (patches/, manifest.csv, local_points.csv).
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for `<patch>.txt` / `.ids` labels and `label_report.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Fixed buffer boxes around the points, no segmentation.
    #[arg(long)]
    pub baseline_buffer: bool,
    #[arg(long, value_enum, default_value_t = BackendKind::Synthetic)]
    pub backend: BackendKind,
    /// JSON-lines mask file for the fixture backend.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    /// Command line of the external backend, split on whitespace.
    #[arg(long)]
    pub backend_cmd: Option<String>,
    /// Buffer for whales in meters.
    #[arg(long, default_value_t = 4.0)]
    pub whale_buffer_m: f64,
    /// Buffer for seals in meters.
    #[arg(long, default_value_t = 2.0)]
    pub seal_buffer_m: f64,
    #[arg(long, value_enum, default_value_t = BufferModeArg::HalfExtent)]
    pub buffer_mode: BufferModeArg,
    /// Recorded in the report; the built-in backends are deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Directory with patches/ and manifest.csv.
    #[arg(long)]
    pub data: PathBuf,
    /// Label directory produced by `label`.
    #[arg(long)]
    pub labels: PathBuf,
    /// Expert-refined labels to merge over the automatic ones.
    #[arg(long)]
    pub refined: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train, val and test fractions.
    #[arg(long, value_delimiter = ',', default_values_t = [0.7, 0.1, 0.2])]
    pub ratios: Vec<f64>,
    /// IoU below which a same-class refined box counts as moved.
    #[arg(long, default_value_t = 0.9)]
    pub move_iou: f64,
}

#[derive(Debug, Args)]
pub struct ScoringInput {
    /// Ground-truth label directory.
    #[arg(long)]
    pub gt: PathBuf,
    /// Manifest giving patch sizes; otherwise --patch-size applies to all patches.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 320)]
    pub patch_size: u32,
    /// IoU needed for a true positive.
    #[arg(long, default_value_t = 0.25)]
    pub iou: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction directory; repeat for several runs, which are averaged.
    #[arg(long, required = true)]
    pub pred: Vec<PathBuf>,
    #[command(flatten)]
    pub input: ScoringInput,
    /// Minimum detection confidence.
    #[arg(long, default_value_t = 0.15)]
    pub conf: f64,
    /// Row label in the report table.
    #[arg(long, default_value = "run")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Validation-set prediction directory.
    #[arg(long)]
    pub pred: PathBuf,
    #[command(flatten)]
    pub input: ScoringInput,
}

#[derive(Debug, Args)]
pub struct ConfusionArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[command(flatten)]
    pub input: ScoringInput,
    #[arg(long, default_value_t = 0.15)]
    pub conf: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of patches.
    #[arg(long, default_value_t = 10)]
    pub patches: usize,
    #[arg(long, default_value_t = 4)]
    pub objects: usize,
    #[arg(long, default_value_t = 0.3)]
    pub touch_probability: f64,
    #[arg(long, default_value_t = 320)]
    pub size: u32,
    #[arg(long, default_value_t = 0.3)]
    pub gsd: f64,
    /// Number of simulated detector runs written under predictions/run<k>.
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Labeled data directory (manifest.csv, patches/, labels/).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = seeker_review::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory of static UI files.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0.9)]
    pub move_iou: f64,
}
