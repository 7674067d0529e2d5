use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use asymdet::cli::{
    cmd_detect, cmd_eval, cmd_stratify, cmd_synth, parse_iou_list, DetectOptions, EvalOptions,
    StratifyOptions, SynthOptions,
};
use asymdet::error::{Error, Result};
use asymdet::head::HeadVariant;
use asymdet::nms::NmsParams;

#[derive(Parser)]
#[command(
    name = "asymdet",
    about = "Asymmetric receptive-field detection head pipeline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic fixture directory (neck maps, head weights,
    /// labels, manifest).
    Synth(SynthArgs),
    /// Run a head variant over fixtures and write detections plus timing.
    Detect(DetectArgs),
    /// Score a detections file against labels; write metrics and a PR curve.
    Eval(EvalArgs),
    /// Split labels into square / wide / tall validation subsets.
    Stratify(StratifyArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output fixture directory.
    #[arg(long)]
    out: PathBuf,
    /// RNG seed; the same seed reproduces the directory byte for byte.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of images to synthesize.
    #[arg(long, default_value_t = 3)]
    images: usize,
    /// Input image size in pixels (must be divisible by 32).
    #[arg(long, default_value_t = 640)]
    imgsz: u32,
}

#[derive(Args)]
struct DetectArgs {
    /// Fixture directory produced by `synth`.
    #[arg(long)]
    fixtures: PathBuf,
    /// Output directory for detections.txt and timing.csv.
    #[arg(long)]
    out: PathBuf,
    /// Head variant: "asym" (nine maps, grouped NMS) or "original".
    #[arg(long, default_value = "asym")]
    variant: String,
    /// Confidence threshold; use 0.001 for evaluation-grade runs.
    #[arg(long, default_value_t = 0.25)]
    conf: f64,
    /// NMS IoU threshold.
    #[arg(long = "iou-nms", default_value_t = 0.45)]
    iou_nms: f64,
    /// Keep at most this many detections per image.
    #[arg(long = "max-det", default_value_t = 300)]
    max_det: usize,
    /// Suppress across classes instead of within each class.
    #[arg(long = "class-blind", default_value_t = false)]
    class_blind: bool,
    /// Input image size in pixels.
    #[arg(long, default_value_t = 640)]
    imgsz: u32,
    /// Worker threads for image-level parallelism (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Detections file written by `detect`.
    #[arg(long)]
    detections: PathBuf,
    /// Directory of `<image_id>.txt` label files.
    #[arg(long)]
    labels: PathBuf,
    /// Image-size manifest CSV (`image_id,width,height`).
    #[arg(long)]
    manifest: PathBuf,
    /// Timing CSV; defaults to timing.csv next to the detections file.
    #[arg(long)]
    timing: Option<PathBuf>,
    /// Match thresholds: comma list or start:step:end ladder.
    #[arg(long = "iou-eval", default_value = "0.5:0.05:0.95")]
    iou_eval: String,
    /// Output directory for metrics.txt and pr.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StratifyArgs {
    /// Directory of `<image_id>.txt` label files.
    #[arg(long)]
    labels: PathBuf,
    /// Image-size manifest CSV.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for the three split manifests.
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => {
            let summary = cmd_synth(&SynthOptions {
                out: args.out,
                seed: args.seed,
                image_count: args.images,
                input_size: args.imgsz,
            })?;
            println!(
                "synthesized {} images, {} labels",
                summary.image_ids.len(),
                summary.label_count
            );
        }
        Command::Detect(args) => {
            let variant = HeadVariant::from_tag(&args.variant).ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant '{}', expected 'original' or 'asym'",
                    args.variant
                ))
            })?;
            let summary = cmd_detect(&DetectOptions {
                fixtures: args.fixtures,
                out: args.out,
                variant,
                conf_threshold: args.conf,
                nms_params: NmsParams::new(args.iou_nms, !args.class_blind, args.max_det)?,
                input_size: args.imgsz,
                workers: args.workers,
            })?;
            println!(
                "detected {} boxes over {} images (pre {:.1}ms, inference {:.1}ms, NMS {:.1}ms per image)",
                summary.detection_count,
                summary.image_count,
                summary.timing_means.0,
                summary.timing_means.1,
                summary.timing_means.2
            );
        }
        Command::Eval(args) => {
            let report = cmd_eval(&EvalOptions {
                detections: args.detections,
                labels_dir: args.labels,
                manifest: args.manifest,
                timing: args.timing,
                iou_thresholds: parse_iou_list(&args.iou_eval)?,
                out: args.out,
            })?;
            print!("{}", report.metrics_text());
        }
        Command::Stratify(args) => {
            let summary = cmd_stratify(&StratifyOptions {
                labels_dir: args.labels,
                manifest: args.manifest,
                out: args.out,
            })?;
            for (class, images, labels) in &summary.splits {
                println!("{class}: {images} images, {labels} labels");
            }
            println!(
                "total: {} images, {} labels",
                summary.total_images, summary.total_labels
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}
