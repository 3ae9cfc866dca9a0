use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use filmdamage::bank::{load_annotations, load_synthetic_dir, synth_scratch, ScratchConfig};
use filmdamage::dataset::{build_dataset, DamageConfig, DatasetManifest};
use filmdamage::metrics::{aggregate, derive_gt_mask, AggregateReport};
use filmdamage::overlay::{apply_overlay, generate_overlay_with, overlay_to_mask};
use filmdamage::patchwork::{dirty_patch_indices, extract_patches};
use filmdamage::seed::{self, tag};
use filmdamage::stats::summarize_annotations;
use filmdamage::{
    io, iou_f1, par, plan_grid, stitch, ArtefactBank, ClassStatistics, DamageOverlay, FloatImage,
    FrameGeometry, MetricsReport, PatchGrid, Polarity,
};

use crate::{
    Cli, Command, DamageArgs, DatasetArgs, FrameArgs, Global, IngestArgs, MetricsArgs, OverlayArgs,
    PatchifyArgs, PolarityArg, StatsArgs, StitchArgs,
};

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    par::with_threads(g.threads, || match &cli.command {
        Command::Ingest(a) => ingest(g, a),
        Command::Stats(a) => stats(g, a),
        Command::Overlay(a) => overlay(g, a),
        Command::Damage(a) => damage(g, a),
        Command::Dataset(a) => dataset(g, a),
        Command::Patchify(a) => patchify(g, a),
        Command::Stitch(a) => stitch_cmd(g, a),
        Command::Metrics(a) => metrics(g, a),
    })
}

fn require_out(g: &Global) -> Result<&Path> {
    g.out
        .as_deref()
        .ok_or_else(|| anyhow!("--out is required for this subcommand"))
}

fn load_config(g: &Global) -> Result<DamageConfig> {
    let path = g
        .config
        .as_deref()
        .ok_or_else(|| anyhow!("--config is required for this subcommand"))?;
    let mut cfg =
        DamageConfig::load(path).with_context(|| format!("loading config {}", path.display()))?;
    if let Some(s) = g.seed {
        cfg.master_seed = s;
    }
    Ok(cfg)
}

/// Write JSON to `--out`, or standard output without one.
fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => io::write_json(p, value)?,
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn geometry_from(frame: &FrameArgs, fallback: Option<(usize, usize)>) -> Result<FrameGeometry> {
    let (w, h) = match (frame.frame_width, frame.frame_height, fallback) {
        (Some(w), Some(h), _) => (w, h),
        (None, None, Some(dims)) => dims,
        (None, None, None) => bail!("frame size unknown: pass --frame-width and --frame-height"),
        _ => bail!("--frame-width and --frame-height go together"),
    };
    Ok(FrameGeometry::with_size_mm(
        w,
        h,
        frame.long_edge_mm,
        frame.short_edge_mm,
    )?)
}

fn ingest(g: &Global, a: &IngestArgs) -> Result<()> {
    let out = require_out(g)?;
    let annotations = load_annotations(&a.annotations)?;
    let frames: BTreeSet<&str> = annotations.iter().map(|x| x.frame_id.as_str()).collect();
    let mut scans = HashMap::new();
    for f in &frames {
        let path = a.scans.join(format!("{f}.png"));
        scans.insert(f.to_string(), io::load_luma(&path)?);
    }
    let first = scans.values().next().map(|s| s.dims());
    let geometry = geometry_from(&a.frame, first)?;
    let mut bank = ArtefactBank::from_scans(&annotations, &scans, geometry)?;
    if let Some(dir) = &a.synthetic {
        bank = bank.extended(load_synthetic_dir(dir, geometry.microns_per_px())?);
    }
    if a.scratches > 0 {
        let cfg = ScratchConfig {
            microns_per_px: geometry.microns_per_px(),
            ..ScratchConfig::default()
        };
        let mut rng = seed::rng_for(g.seed.unwrap_or(0), &[tag::SCRATCH]);
        let extra = (0..a.scratches)
            .map(|_| synth_scratch(&cfg, &mut rng))
            .collect::<filmdamage::Result<Vec<_>>>()?;
        bank = bank.extended(extra);
    }
    bank.save(out)?;
    for (class, n) in bank.counts() {
        log::info!("{class}: {n} sprites");
    }
    Ok(())
}

fn stats(g: &Global, a: &StatsArgs) -> Result<()> {
    let annotations = load_annotations(&a.annotations)?;
    let geometry = match &a.bank {
        Some(b) => *ArtefactBank::load(b)?.geometry(),
        None => geometry_from(&a.frame, None)?,
    };
    let doc = ClassStatistics::from_annotations(&annotations, &geometry, a.patch_px)?;
    eprintln!(
        "{:<12} {:>7} {:>14} {:>14}",
        "class", "count", "mean µm²", "std µm²"
    );
    for row in summarize_annotations(&annotations, &geometry) {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.0}"));
        eprintln!(
            "{:<12} {:>7} {:>14} {:>14}",
            row.class.label(),
            row.count,
            fmt(row.mean_area_um2),
            fmt(row.std_area_um2)
        );
    }
    emit_json(g.out.as_deref(), &doc)
}

fn overlay(g: &Global, a: &OverlayArgs) -> Result<()> {
    let out = require_out(g)?;
    let cfg = load_config(g)?;
    let (w, h) = match (a.width, a.height, cfg.resolution) {
        (Some(w), Some(h), _) => (w, h),
        (None, None, Some([w, h])) => (w, h),
        _ => {
            bail!("overlay size unknown: pass --width and --height or set resolution in the config")
        }
    };
    let (stats, bank) = cfg.load_inputs()?;
    let ov = generate_overlay_with(
        &stats,
        &bank,
        w,
        h,
        &cfg.field,
        cfg.master_seed,
        &cfg.overlay,
    )?;
    ov.save(out)?;
    log::info!("{} placements", ov.placements.len());
    Ok(())
}

fn damage(g: &Global, a: &DamageArgs) -> Result<()> {
    let out = require_out(g)?;
    let img = io::load_rgb8(&a.image)?;
    let ov = DamageOverlay::load(&a.overlay)?;
    let polarity = match a.polarity {
        PolarityArg::Negative => Polarity::Negative,
        PolarityArg::Positive => Polarity::Positive,
    };
    io::save_rgb8(out, &apply_overlay(&img, &ov, polarity)?)?;
    if let Some(m) = &a.mask {
        io::save_mask(m, &overlay_to_mask(&ov, a.tau_alpha)?)?;
    }
    Ok(())
}

fn dataset(g: &Global, a: &DatasetArgs) -> Result<()> {
    let out = require_out(g)?;
    let cfg = load_config(g)?;
    let mut clean: Vec<PathBuf> = std::fs::read_dir(&a.clean_dir)
        .with_context(|| format!("reading {}", a.clean_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    clean.sort();
    if clean.is_empty() {
        bail!("no PNG images in {}", a.clean_dir.display());
    }
    let manifest = build_dataset(&clean, &cfg, out)?;
    if manifest.len() < clean.len() {
        log::warn!(
            "{} of {} images skipped",
            clean.len() - manifest.len(),
            clean.len()
        );
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct PatchSet {
    source: PathBuf,
    grid: PatchGrid,
    files: Vec<String>,
    /// Patches touching the mask given to `patchify`, when there was one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dirty: Option<Vec<usize>>,
}

const GRID_FILE: &str = "grid.json";

fn patchify(g: &Global, a: &PatchifyArgs) -> Result<()> {
    let out = require_out(g)?;
    let img = FloatImage::from_rgb8(&io::load_rgb8(&a.image)?);
    let grid = plan_grid(img.width, img.height, a.patch, a.overlap)?;
    let dirty = match &a.mask {
        Some(m) => Some(dirty_patch_indices(&grid, &io::load_mask(m)?)?),
        None => None,
    };
    let patches = extract_patches(&img, &grid)?;
    let files: Vec<String> = (0..patches.len())
        .map(|i| format!("patch_{i:05}.png"))
        .collect();
    for (p, f) in patches.iter().zip(&files) {
        io::save_rgb8(&out.join(f), &p.to_rgb8()?)?;
    }
    let set = PatchSet {
        source: a.image.clone(),
        grid,
        files,
        dirty,
    };
    io::write_json(&out.join(GRID_FILE), &set)?;
    Ok(())
}

fn stitch_cmd(g: &Global, a: &StitchArgs) -> Result<()> {
    let out = require_out(g)?;
    let set: PatchSet = io::read_json(&a.grid)?;
    if set.files.len() != set.grid.origins.len() {
        bail!(
            "grid lists {} files for {} patches",
            set.files.len(),
            set.grid.origins.len()
        );
    }
    let base = a.grid.parent().unwrap_or(Path::new(""));
    let mut patches = Vec::with_capacity(set.files.len());
    for (origin, f) in set.grid.origins.iter().zip(&set.files) {
        let replaced = a.patches.as_ref().map(|d| d.join(f)).filter(|p| p.exists());
        let path = replaced.unwrap_or_else(|| base.join(f));
        patches.push((*origin, FloatImage::from_rgb8(&io::load_rgb8(&path)?)));
    }
    let img = stitch(&patches, &set.grid)?;
    io::save_rgb8(out, &img.to_rgb8()?)?;
    Ok(())
}

fn lpips(cmd: &str, reference: &Path, test: &Path) -> Result<f64> {
    let mut parts = cmd.split_whitespace();
    let prog = parts.next().ok_or_else(|| anyhow!("empty LPIPS command"))?;
    let output = process::Command::new(prog)
        .args(parts)
        .arg(reference)
        .arg(test)
        .output()
        .with_context(|| format!("running {prog}"))?;
    if !output.status.success() {
        bail!("{prog} exited with {}", output.status);
    }
    let text = String::from_utf8_lossy(&output.stdout);
    text.split_whitespace()
        .last()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| anyhow!("{prog} printed no number"))
}

fn image_report(reference: &Path, test: &Path, lpips_cmd: Option<&str>) -> Result<MetricsReport> {
    let a = FloatImage::from_rgb8(&io::load_rgb8(reference)?);
    let b = FloatImage::from_rgb8(&io::load_rgb8(test)?);
    let mut r = MetricsReport::for_images(&a, &b)?;
    if let Some(cmd) = lpips_cmd {
        r.lpips = Some(lpips(cmd, reference, test)?);
    }
    Ok(r)
}

#[derive(Debug, Serialize)]
struct PairOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    master_seed: Option<u64>,
    #[serde(flatten)]
    report: MetricsReport,
}

#[derive(Debug, Serialize)]
struct NamedReport {
    name: String,
    seed: u64,
    #[serde(flatten)]
    report: MetricsReport,
}

#[derive(Debug, Serialize)]
struct BatchOutput {
    summary: AggregateReport,
    images: Vec<NamedReport>,
}

fn file_name(p: &Path) -> Result<&std::ffi::OsStr> {
    p.file_name()
        .ok_or_else(|| anyhow!("{} has no file name", p.display()))
}

fn metrics(g: &Global, a: &MetricsArgs) -> Result<()> {
    let seed = g.seed.unwrap_or(0);
    let lpips_cmd = a.lpips_cmd.as_deref();
    if let Some(pair) = &a.images {
        let mut report = image_report(&pair[0], &pair[1], lpips_cmd)?;
        if !a.thresholds.is_empty() {
            let reference = io::load_mask(a.reference_mask.as_deref().expect("enforced by clap"))?;
            let damaged = FloatImage::from_rgb8(&io::load_rgb8(&pair[0])?);
            let restored = FloatImage::from_rgb8(&io::load_rgb8(&pair[1])?);
            let (mask, t) = derive_gt_mask(&damaged, &restored, &a.thresholds, |m| {
                iou_f1(m, &reference).map_or(f64::NEG_INFINITY, |(_, f1)| f1)
            })?;
            let masks = MetricsReport::for_masks(&mask, &reference, seed)?;
            report.iou = masks.iou;
            report.f1 = masks.f1;
            report.emd = masks.emd;
            report.thresholds = a.thresholds.clone();
            report.chosen_threshold = Some(t);
        }
        return emit_json(
            g.out.as_deref(),
            &PairOutput {
                master_seed: g.seed,
                report,
            },
        );
    }
    if let Some(pair) = &a.masks {
        let report =
            MetricsReport::for_masks(&io::load_mask(&pair[0])?, &io::load_mask(&pair[1])?, seed)?;
        return emit_json(
            g.out.as_deref(),
            &PairOutput {
                master_seed: g.seed,
                report,
            },
        );
    }
    let path = a
        .manifest
        .as_deref()
        .expect("clap requires one input group");
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let manifest = DatasetManifest::from_jsonl(&text)?;
    let results = par::map(&manifest.entries, |e| -> Result<NamedReport> {
        let mut report = match &a.restored {
            Some(dir) => image_report(
                &e.clean_path,
                &dir.join(file_name(&e.damaged_path)?),
                lpips_cmd,
            )?,
            None => image_report(&e.clean_path, &e.damaged_path, lpips_cmd)?,
        };
        if let Some(dir) = &a.predicted_masks {
            let predicted = io::load_mask(&dir.join(file_name(&e.mask_path)?))?;
            let m = MetricsReport::for_masks(&predicted, &io::load_mask(&e.mask_path)?, e.seed)?;
            report.iou = m.iou;
            report.f1 = m.f1;
            report.emd = m.emd;
        }
        Ok(NamedReport {
            name: file_name(&e.damaged_path)?.to_string_lossy().into_owned(),
            seed: e.seed,
            report,
        })
    });
    let images = results.into_iter().collect::<Result<Vec<_>>>()?;
    let reports: Vec<MetricsReport> = images.iter().map(|n| n.report.clone()).collect();
    let mut summary = aggregate(&reports);
    summary.master_seed = g.seed.or(manifest.entries.first().map(|e| e.master_seed));
    emit_json(g.out.as_deref(), &BatchOutput { summary, images })
}
