//! `fishweight` — reproducible batch runs over the fishweight library.
//!
//! Every command is deterministic given its flags, seeds, and input files;
//! outputs are written atomically (temp file + rename) and re-runs produce
//! byte-identical files. Errors go to stderr as single-line JSON
//! diagnostics with a nonzero exit code.

mod commands;
mod io_util;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "fishweight",
    version,
    about = "Fish weight estimation from silhouette areas: generate, fit, evaluate, predict"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic datasets or silhouette masks.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Fit a power-law weight-from-area model to a sample CSV.
    Fit(FitArgs),
    /// Evaluate a model JSON against a sample CSV and flag outliers.
    Eval(EvalArgs),
    /// Predict the weight for one area or one mask file.
    Predict(PredictArgs),
    /// Write deterministic augmented image/mask pairs.
    Augment(AugmentArgs),
    /// Emit the per-epoch learning-rate table.
    Schedule(ScheduleArgs),
}

#[derive(Subcommand)]
enum GenCommand {
    /// Seeded allometric area-weight samples with optional noise/outliers.
    Samples(GenSamplesArgs),
    /// Whole + no-fins silhouette mask pairs with a schema-B sidecar CSV.
    Silhouettes(GenSilhouettesArgs),
}

#[derive(Args)]
struct GenSamplesArgs {
    /// Power-law coefficient of the generating model.
    #[arg(long, default_value_t = 0.124)]
    a: f64,
    /// Power-law exponent of the generating model.
    #[arg(long, default_value_t = 1.55)]
    b: f64,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 50.0)]
    area_min: f64,
    #[arg(long, default_value_t = 500.0)]
    area_max: f64,
    /// Std dev of the multiplicative log-normal weight noise.
    #[arg(long, default_value_t = 0.05)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    outlier_fraction: f64,
    /// Comma-separated weight multipliers applied to outliers.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 2.0])]
    outlier_multipliers: Vec<f64>,
    #[arg(long)]
    seed: u64,
    /// Output sample CSV (schema A).
    #[arg(long)]
    out: PathBuf,
    /// Optional truth CSV with per-sample outlier flags.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Args)]
struct GenSilhouettesArgs {
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 150.0)]
    length_min: f64,
    #[arg(long, default_value_t = 300.0)]
    length_max: f64,
    #[arg(long, default_value_t = 0.35)]
    aspect: f64,
    #[arg(long, default_value_t = 1.0)]
    mm_per_pixel: f64,
    /// Coefficient of the model assigning weights to generated fish.
    #[arg(long, default_value_t = 0.170)]
    a: f64,
    /// Exponent of the weight-assignment model.
    #[arg(long, default_value_t = 1.5)]
    b: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Mask file format.
    #[arg(long, value_enum, default_value_t = MaskFormat::Pgm)]
    format: MaskFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskFormat {
    Pgm,
    Png,
}

impl MaskFormat {
    fn extension(self) -> &'static str {
        match self {
            MaskFormat::Pgm => "pgm",
            MaskFormat::Png => "png",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemaArg {
    /// id,area_cm2,weight_g[,cohort]
    AreaWeight,
    /// id,mask_path,weight_g,mm_per_pixel[,cohort]
    MaskPath,
}

impl From<SchemaArg> for fishweight::dataset::SampleSchema {
    fn from(value: SchemaArg) -> Self {
        match value {
            SchemaArg::AreaWeight => Self::AreaWeight,
            SchemaArg::MaskPath => Self::MaskPath,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    OneFactor,
    TwoFactor,
}

impl From<KindArg> for fishweight::fitting::ModelKind {
    fn from(value: KindArg) -> Self {
        match value {
            KindArg::OneFactor => Self::OneFactor,
            KindArg::TwoFactor => Self::TwoFactor,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    LogMse,
    LinearMse,
    RansacLog,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = SchemaArg::AreaWeight)]
    schema: SchemaArg,
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// RANSAC iterations.
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    /// RANSAC absolute ln-weight residual bound.
    #[arg(long, default_value_t = 0.10)]
    inlier_threshold: f64,
    /// RANSAC minimum consensus fraction.
    #[arg(long, default_value_t = 0.5)]
    min_inlier_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output FitReport JSON.
    #[arg(long)]
    out: PathBuf,
    /// Optional per-sample residual table (CSV with linear and log-log
    /// columns for plotting).
    #[arg(long)]
    residuals_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Model JSON: {"kind","method","a","b"}.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = SchemaArg::AreaWeight)]
    schema: SchemaArg,
    /// Relative-error percentage above which samples are flagged.
    #[arg(long, default_value_t = 30.0)]
    outlier_threshold: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Optional flagged-outlier CSV.
    #[arg(long)]
    outliers_out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Area in cm² (alternative to --mask).
    #[arg(long, conflicts_with = "mask")]
    area: Option<f64>,
    /// Mask file; area is extracted from its nonzero pixels.
    #[arg(long, requires = "mm_per_pixel")]
    mask: Option<PathBuf>,
    /// Calibration for --mask input.
    #[arg(long)]
    mm_per_pixel: Option<f64>,
    /// Plain grams by default; json or csv for structured output.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    mm_per_pixel: f64,
    /// AugmentConfig JSON file; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of augmented pairs to draw.
    #[arg(long, default_value_t = 1)]
    draws: u64,
    /// Seed override; wins over the config file's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long, default_value_t = 1e-3)]
    lr_start: f64,
    #[arg(long, default_value_t = 1e-5)]
    lr_end: f64,
    #[arg(long, default_value_t = 100)]
    epochs: u32,
    #[arg(long, default_value_t = 10.0)]
    encoder_factor: f64,
    /// Output CSV: epoch,base_lr,encoder_lr.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(GenCommand::Samples(args)) => commands::gen_samples(args),
        Command::Gen(GenCommand::Silhouettes(args)) => commands::gen_silhouettes(args),
        Command::Fit(args) => commands::fit(args),
        Command::Eval(args) => commands::eval(args),
        Command::Predict(args) => commands::predict(args),
        Command::Augment(args) => commands::augment(args),
        Command::Schedule(args) => commands::schedule(args),
    };
    if let Err(error) = result {
        let diagnostic = serde_json::json!({ "error": format!("{error:#}") });
        eprintln!("{diagnostic}");
        std::process::exit(1);
    }
}
