use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Debug, Parser)]
#[command(
    name = "filmdamage",
    version,
    about = "Simulate and measure analogue film damage"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Master seed; overrides the one in the config document.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Damage config document (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cut annotated artefacts out of scans into a sprite bank.
    Ingest(IngestArgs),
    /// Fit count and area distributions from annotations.
    Stats(StatsArgs),
    /// Generate one damage overlay.
    Overlay(OverlayArgs),
    /// Composite an overlay onto an image.
    Damage(DamageArgs),
    /// Damage a directory of clean images.
    Dataset(DatasetArgs),
    /// Split an image into overlapping patches.
    Patchify(PatchifyArgs),
    /// Blend patches back into an image.
    Stitch(StitchArgs),
    /// Compare images or masks.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// Directory of `<frame_id>.png` scans.
    #[arg(long)]
    pub scans: PathBuf,
    /// Directory of `<class>/*.png` drawn sprites to add.
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
    /// Procedural scratches to add.
    #[arg(long, default_value_t = 0)]
    pub scratches: usize,
    #[command(flatten)]
    pub frame: FrameArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FrameArgs {
    /// Scan width in pixels (defaults to the first scan's).
    #[arg(long)]
    pub frame_width: Option<usize>,
    #[arg(long)]
    pub frame_height: Option<usize>,
    #[arg(long, default_value_t = 35.0)]
    pub long_edge_mm: f64,
    #[arg(long, default_value_t = 24.0)]
    pub short_edge_mm: f64,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// Sprite bank whose frame geometry to use.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    #[command(flatten)]
    pub frame: FrameArgs,
    #[arg(long, default_value_t = filmdamage::stats::COUNT_PATCH_PX)]
    pub patch_px: usize,
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolarityArg {
    Negative,
    Positive,
}

#[derive(Debug, Args)]
pub struct DamageArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Overlay PNG with its placements sidecar next to it.
    #[arg(long)]
    pub overlay: PathBuf,
    #[arg(long, value_enum, default_value_t = PolarityArg::Negative)]
    pub polarity: PolarityArg,
    /// Also write the thresholded damage mask here.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub tau_alpha: f64,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[arg(long)]
    pub clean_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PatchifyArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub patch: usize,
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
    /// Record which patches touch foreground pixels of this mask.
    #[arg(long)]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StitchArgs {
    /// Grid descriptor written by `patchify`.
    #[arg(long)]
    pub grid: PathBuf,
    /// Directory holding replacement patches with the same file names.
    #[arg(long)]
    pub patches: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("inputs").required(true).args(["images", "masks", "manifest"]))]
pub struct MetricsArgs {
    /// Two images: reference then test.
    #[arg(long, num_args = 2, value_names = ["REFERENCE", "TEST"])]
    pub images: Option<Vec<PathBuf>>,
    /// Two masks: predicted then reference.
    #[arg(long, num_args = 2, value_names = ["PREDICTED", "REFERENCE"])]
    pub masks: Option<Vec<PathBuf>>,
    /// Dataset manifest (JSON Lines).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Restored images named like the manifest's damaged files.
    #[arg(long, requires = "manifest")]
    pub restored: Option<PathBuf>,
    /// Predicted masks named like the manifest's mask files.
    #[arg(long, requires = "manifest")]
    pub predicted_masks: Option<PathBuf>,
    /// Derive a mask from the two images at each threshold and keep the
    /// one that best matches `--reference-mask` (by F1).
    #[arg(long, value_delimiter = ',', requires_all = ["images", "reference_mask"])]
    pub thresholds: Vec<u32>,
    #[arg(long)]
    pub reference_mask: Option<PathBuf>,
    /// Command printing an LPIPS value for `<cmd> REFERENCE TEST`.
    #[arg(long)]
    pub lpips_cmd: Option<String>,
}

/// The error chain joined by ": ", skipping causes the message already ends with.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !msg.ends_with(&c) {
            msg.push_str(": ");
            msg.push_str(&c);
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}
