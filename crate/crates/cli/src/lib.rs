//! Command-line front end: `fasctrack analyze` and `fasctrack evaluate`.

pub mod analyze;
pub mod config;
pub mod evaluate;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fasctrack::report::Quantity;

use crate::config::{load_config, Settings};

/// Exit status when every frame was measured or reported as undetected.
pub const EXIT_OK: i32 = 0;
/// Exit status for fatal errors (bad configuration, unreadable input).
pub const EXIT_FATAL: i32 = 1;
/// Exit status when output was written but some frames failed.
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "fasctrack", version, about = "Muscle architecture from ultrasound frames")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measure fascicle length, pennation angle and thickness.
    Analyze(Box<AnalyzeArgs>),
    /// Compare masks or measurements between methods.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args, Default)]
pub struct AnalyzeArgs {
    /// A single raster image.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// A video file, or a directory of numbered frames.
    #[arg(long)]
    pub video: Option<PathBuf>,
    /// ONNX aponeurosis model (1x1x512x512 in and out).
    #[arg(long)]
    pub apo_model: Option<PathBuf>,
    /// ONNX fascicle model (1x1x512x512 in and out).
    #[arg(long)]
    pub fasc_model: Option<PathBuf>,
    /// Mask directory (`masks_<class>/<stem>.png`) or a path template with
    /// `{class}`, `{stem}`, `{frame}` or `{frame:N}` placeholders.
    #[arg(long)]
    pub masks_from: Option<String>,
    /// Millimetres per pixel in both directions (required unless both axes are given).
    #[arg(long)]
    pub mm_per_px: Option<String>,
    /// Millimetres per pixel horizontally.
    #[arg(long)]
    pub mm_per_px_x: Option<String>,
    /// Millimetres per pixel vertically.
    #[arg(long)]
    pub mm_per_px_y: Option<String>,
    /// Minimum horizontal extent of an aponeurosis, in pixels [default: 200].
    #[arg(long, allow_hyphen_values = true)]
    pub apo_min_length: Option<String>,
    /// Minimum horizontal extent of a fascicle fragment, in pixels [default: 40].
    #[arg(long, allow_hyphen_values = true)]
    pub fasc_min_length: Option<String>,
    /// Probability threshold for binarizing model output [default: 0.5].
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<String>,
    /// Largest accepted |dy/dx| of a fascicle fragment [default: 3.5].
    #[arg(long, allow_hyphen_values = true)]
    pub slope_bound: Option<String>,
    /// Fraction of the image width used for thickness [default: 0.1].
    #[arg(long, allow_hyphen_values = true)]
    pub thickness_band: Option<String>,
    /// `median` or `mean` [default: median for --image, mean for --video].
    #[arg(long)]
    pub aggregate: Option<String>,
    /// Interpolate runs of up to N frames without fascicles, or `off` [default: off].
    #[arg(long)]
    pub gap_fill: Option<String>,
    /// Directory for overlay images.
    #[arg(long)]
    pub overlays: Option<PathBuf>,
    /// Results CSV path [default: results.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Frames processed in parallel [default: available cores].
    #[arg(long, allow_hyphen_values = true)]
    pub workers: Option<String>,
    /// Frame rate used for timestamps.
    #[arg(long)]
    pub fps: Option<String>,
    /// Decoder command template with `{input}` and `{outdir}` [default: ffmpeg to PNG frames].
    #[arg(long)]
    pub decoder: Option<String>,
    /// Config file of `key = value` lines. Defaults to `$FASCTRACK_CONFIG`.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl AnalyzeArgs {
    /// The flags that were given, keyed like the config file.
    pub fn settings(&self) -> Settings {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let entries = [
            ("image", path(&self.image)),
            ("video", path(&self.video)),
            ("apo_model", path(&self.apo_model)),
            ("fasc_model", path(&self.fasc_model)),
            ("masks_from", self.masks_from.clone()),
            ("mm_per_px", self.mm_per_px.clone()),
            ("mm_per_px_x", self.mm_per_px_x.clone()),
            ("mm_per_px_y", self.mm_per_px_y.clone()),
            ("apo_min_length", self.apo_min_length.clone()),
            ("fasc_min_length", self.fasc_min_length.clone()),
            ("threshold", self.threshold.clone()),
            ("slope_bound", self.slope_bound.clone()),
            ("thickness_band", self.thickness_band.clone()),
            ("aggregate", self.aggregate.clone()),
            ("gap_fill", self.gap_fill.clone()),
            ("overlays", path(&self.overlays)),
            ("out", path(&self.out)),
            ("workers", self.workers.clone()),
            ("fps", self.fps.clone()),
            ("decoder", self.decoder.clone()),
        ];
        entries
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum QuantityArg {
    Length,
    Pennation,
    Thickness,
}

impl From<QuantityArg> for Quantity {
    fn from(q: QuantityArg) -> Self {
        match q {
            QuantityArg::Length => Quantity::Length,
            QuantityArg::Pennation => Quantity::Pennation,
            QuantityArg::Thickness => Quantity::Thickness,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of reference masks.
    #[arg(long, requires = "masks_b")]
    pub masks_a: Option<PathBuf>,
    /// Directory of masks to compare, matched by file name.
    #[arg(long, requires = "masks_a")]
    pub masks_b: Option<PathBuf>,
    /// CSV of paired values, one column per method.
    #[arg(long, conflicts_with_all = ["masks_a", "results_a"])]
    pub values: Option<PathBuf>,
    /// Results CSV from a first analysis run.
    #[arg(long, requires = "results_b", conflicts_with = "masks_a")]
    pub results_a: Option<PathBuf>,
    #[arg(long, requires = "results_a")]
    pub results_b: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "length")]
    pub quantity: QuantityArg,
    /// Write the per-frame comparison table here (results mode).
    #[arg(long)]
    pub comparison: Option<PathBuf>,
    /// Also write the metrics to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn print_and_write(text: &str, out: Option<&PathBuf>) -> anyhow::Result<()> {
    print!("{text}");
    if let Some(path) = out {
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    let text = if let (Some(a), Some(b)) = (&args.masks_a, &args.masks_b) {
        evaluate::format_iou_report(&evaluate::compare_mask_dirs(a, b)?)
    } else if let Some(values) = &args.values {
        evaluate::format_agreement_report(&evaluate::agreement(&evaluate::read_method_table(values)?)?)
    } else if let (Some(a), Some(b)) = (&args.results_a, &args.results_b) {
        let report = evaluate::compare_results(a, b, args.quantity.into(), args.comparison.as_deref())?;
        evaluate::format_agreement_report(&report)
    } else {
        anyhow::bail!("nothing to evaluate: pass --masks-a/--masks-b, --values, or --results-a/--results-b");
    };
    print_and_write(&text, args.out.as_ref())
}

/// Run a parsed command and return the process exit code.
pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Analyze(args) => {
            let outcome = load_config(args.config.as_deref(), args.settings())
                .map_err(anyhow::Error::from)
                .and_then(|cfg| analyze::run_analyze(&cfg));
            match outcome {
                Ok(o) => {
                    let failed = o.failed_frames();
                    eprintln!(
                        "{} frame(s) analysed, {failed} failed; results in {}",
                        o.results.len(),
                        o.csv.display()
                    );
                    if failed > 0 {
                        EXIT_PARTIAL
                    } else {
                        EXIT_OK
                    }
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    EXIT_FATAL
                }
            }
        }
        Command::Evaluate(args) => match evaluate(&args) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("error: {e:#}");
                EXIT_FATAL
            }
        },
    }
}
