use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use e2icm_core::dataset::PermittedUse;
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "e2icm", version, about = "Face-to-MRI frame translation: ingest, train, generate, evaluate, report")]
pub struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inventory a paired corpus, split it, and write manifest.json.
    Ingest(IngestArgs),
    /// Train the generator/discriminator pair on the manifest's train split.
    Train(TrainArgs),
    /// Translate face frames with a checkpoint and tag every output.
    Generate(GenerateArgs),
    /// Score tagged generated frames against ground truth (SSIM, FID).
    Evaluate(EvaluateArgs),
    /// Bias report and face/truth/generated triptychs.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for splitting, initialization and dropout.
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with defaults; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitArg {
    PerFrameRandom,
    PerSentenceHoldout,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: Common,
    /// Corpus root holding face/ and mri/ trees.
    #[arg(long)]
    pub root: PathBuf,
    /// Consent statement covering the corpus; ingestion is refused without it.
    #[arg(long)]
    pub consent: Option<String>,
    /// Permitted uses, comma separated (training, evaluation,
    /// synthetic-generation, publication, research).
    #[arg(long, value_delimiter = ',')]
    pub permit: Vec<PermittedUse>,
    /// JSON object: subject id → {attribute: value}.
    #[arg(long)]
    pub demographics: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Source frame rate as N or N/D.
    #[arg(long, default_value = "15")]
    pub fps: String,
    /// Pair sentences with unequal frame counts by nearest index instead of
    /// rejecting them.
    #[arg(long)]
    pub resample_nearest: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 8-layer U-Net and 70×70 patch discriminator at 256×256.
    Standard,
    /// Narrow 4-layer network at 16×16 for smoke runs.
    Tiny,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelFlags {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Square frame side.
    #[arg(long)]
    pub size: Option<usize>,
    /// Encoder widths, e.g. 16,32,32,32; the decoder mirrors them.
    #[arg(long, value_delimiter = ',')]
    pub encoder_widths: Option<Vec<usize>>,
    /// Discriminator widths before the 1-channel head.
    #[arg(long, value_delimiter = ',')]
    pub disc_widths: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub lambda_l1: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Continue from the newest checkpoint under the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Continue from this checkpoint directory.
    #[arg(long)]
    pub resume_from: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitSel {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint directory, a directory of checkpoints, or a train output
    /// directory (the newest checkpoint is used).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Training manifest; supplies the consent scope and, without --input,
    /// the face frames.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory of face frames to translate instead of a manifest split.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Manifest split to translate when --input is absent.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitSel,
    /// Keep dropout active at inference, seeded by --seed.
    #[arg(long)]
    pub dropout: bool,
    /// Record timestamp (Unix seconds). Defaults to SOURCE_DATE_EPOCH, else
    /// the checkpoint's modification time.
    #[arg(long)]
    pub created_at: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorArg {
    /// Pretrained Inception-v3 pool features (not bundled: FID reported as null).
    Inception,
    /// Flattened pixels after resizing to --feature-size.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowArg {
    Gaussian,
    Uniform,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SsimFlags {
    #[arg(long, value_enum)]
    pub ssim_window: Option<WindowArg>,
    #[arg(long)]
    pub ssim_size: Option<usize>,
    #[arg(long)]
    pub ssim_sigma: Option<f64>,
    #[arg(long)]
    pub ssim_k1: Option<f64>,
    #[arg(long)]
    pub ssim_k2: Option<f64>,
    #[arg(long)]
    pub ssim_dynamic_range: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Generated frames (every file must carry provenance).
    #[arg(long)]
    pub generated: PathBuf,
    /// Ground-truth frames at the same relative paths.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_enum)]
    pub extractor: Option<ExtractorArg>,
    /// Side the identity extractor resizes to.
    #[arg(long)]
    pub feature_size: Option<usize>,
    #[command(flatten)]
    pub ssim: SsimFlags,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Generated frames to render as triptychs.
    #[arg(long)]
    pub generated: Option<PathBuf>,
    /// metrics.json from evaluate, embedded in the report.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}
