//! Batch damaging of clean scans into damaged/clean/mask triplets.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bank::ArtefactBank;
use crate::error::{Error, Result};
use crate::io;
use crate::noise::PerlinField;
use crate::overlay::{
    apply_overlay, generate_overlay_with, overlay_to_mask, OverlayOptions, Polarity,
};
use crate::par;
use crate::raster::Mask;
use crate::seed::{self, tag};
use crate::stats::ClassStatistics;

/// Smallest accepted clean image edge.
pub const MIN_IMAGE_PX: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamageConfig {
    pub stats: PathBuf,
    pub bank: PathBuf,
    /// Probability of rendering an image as a damaged negative.
    #[serde(default = "half")]
    pub polarity_probability: f64,
    #[serde(default)]
    pub field: PerlinField,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_tau")]
    pub tau_alpha: f64,
    #[serde(default = "default_split")]
    pub split_ratio: f64,
    /// Default overlay size as `[width, height]` for single overlays.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<[usize; 2]>,
    #[serde(default, flatten)]
    pub overlay: OverlayOptions,
}

fn half() -> f64 {
    0.5
}

fn default_tau() -> f64 {
    0.05
}

fn default_split() -> f64 {
    0.9
}

impl DamageConfig {
    pub fn new(stats: PathBuf, bank: PathBuf) -> Self {
        Self {
            stats,
            bank,
            polarity_probability: half(),
            field: PerlinField::default(),
            master_seed: 0,
            tau_alpha: default_tau(),
            split_ratio: default_split(),
            resolution: None,
            overlay: OverlayOptions::default(),
        }
    }

    /// Read a config document; relative paths are taken relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = io::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.stats.is_relative() {
            cfg.stats = base.join(&cfg.stats);
        }
        if cfg.bank.is_relative() {
            cfg.bank = base.join(&cfg.bank);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.polarity_probability) {
            return Err(Error::invalid("polarity probability must be in [0, 1]"));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio <= 1.0) {
            return Err(Error::invalid("split ratio must be in (0, 1]"));
        }
        if !(self.tau_alpha > 0.0 && self.tau_alpha < 1.0) {
            return Err(Error::invalid("tau_alpha must be in (0, 1)"));
        }
        self.field.validate()
    }

    pub fn load_inputs(&self) -> Result<(ClassStatistics, ArtefactBank)> {
        let text = std::fs::read_to_string(&self.stats).map_err(|e| Error::io(&self.stats, e))?;
        Ok((
            ClassStatistics::from_json(&text)?,
            ArtefactBank::load(&self.bank)?,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clean_path: PathBuf,
    pub damaged_path: PathBuf,
    pub mask_path: PathBuf,
    pub polarity: Polarity,
    pub seed: u64,
    pub split: Split,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entries always serialise") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::MalformedDocument(e.to_string())))
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Seed of the `index`-th image of a run.
pub fn image_seed(master_seed: u64, index: usize) -> u64 {
    seed::derive(master_seed, &[tag::IMAGE, index as u64])
}

/// Polarity drawn for an image seed.
pub fn image_polarity(image_seed: u64, negative_probability: f64) -> Polarity {
    let mut rng = seed::rng_for(image_seed, &[tag::POLARITY]);
    if rng.random_bool(negative_probability.clamp(0.0, 1.0)) {
        Polarity::Negative
    } else {
        Polarity::Positive
    }
}

/// Load stats and bank from the config, then [`build_dataset_with`].
pub fn build_dataset(
    clean_list: &[PathBuf],
    config: &DamageConfig,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    config.validate()?;
    let (stats, bank) = config.load_inputs()?;
    build_dataset_with(clean_list, config, &stats, &bank, out_dir)
}

/// Damage every image in `clean_list`, writing `damaged/`, `masks/` and
/// `manifest.jsonl` under `out_dir`.
///
/// Images that cannot be read, are smaller than 256×256 or fail to write
/// are logged and skipped. Entries keep the input order.
pub fn build_dataset_with(
    clean_list: &[PathBuf],
    config: &DamageConfig,
    stats: &ClassStatistics,
    bank: &ArtefactBank,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let results = par::map_indexed(clean_list.len(), |i| {
        damage_one(i, &clean_list[i], config, stats, bank, out_dir)
    });
    let mut entries = Vec::with_capacity(results.len());
    for (path, r) in clean_list.iter().zip(results) {
        match r {
            Ok(e) => entries.push(e),
            Err(e) => log::error!("skipping {}: {e}", path.display()),
        }
    }
    let manifest = split_train_val(
        &DatasetManifest { entries },
        config.split_ratio,
        config.master_seed,
    )?;
    let manifest_path = out_dir.join("manifest.jsonl");
    std::fs::write(&manifest_path, manifest.to_jsonl())
        .map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

fn damage_one(
    index: usize,
    clean: &Path,
    config: &DamageConfig,
    stats: &ClassStatistics,
    bank: &ArtefactBank,
    out_dir: &Path,
) -> Result<ManifestEntry> {
    let img = io::load_rgb8(clean)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w < MIN_IMAGE_PX || h < MIN_IMAGE_PX {
        return Err(Error::TooSmall {
            width: w,
            height: h,
            min: MIN_IMAGE_PX,
        });
    }
    let seed = image_seed(config.master_seed, index);
    let polarity = image_polarity(seed, config.polarity_probability);
    let overlay = generate_overlay_with(stats, bank, w, h, &config.field, seed, &config.overlay)?;
    let damaged = apply_overlay(&img, &overlay, polarity)?;
    let mask = overlay_to_mask(&overlay, config.tau_alpha)?;

    let stem = clean
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image");
    let name = format!("{index:05}_{stem}.png");
    let damaged_path = out_dir.join("damaged").join(&name);
    let mask_path = out_dir.join("masks").join(&name);
    io::save_rgb8(&damaged_path, &damaged)?;
    io::save_mask(&mask_path, &mask)?;
    Ok(ManifestEntry {
        clean_path: clean.to_path_buf(),
        damaged_path,
        mask_path,
        polarity,
        seed,
        split: Split::Train,
        master_seed: config.master_seed,
    })
}

/// Rebuild the mask of a manifest entry from its seed.
pub fn regenerate_mask(
    entry: &ManifestEntry,
    width_px: usize,
    height_px: usize,
    config: &DamageConfig,
    stats: &ClassStatistics,
    bank: &ArtefactBank,
) -> Result<Mask> {
    let overlay = generate_overlay_with(
        stats,
        bank,
        width_px,
        height_px,
        &config.field,
        entry.seed,
        &config.overlay,
    )?;
    overlay_to_mask(&overlay, config.tau_alpha)
}

/// Label the first `floor(ratio·N)` entries of a seeded shuffle as train
/// and the rest as validation. Entry order is unchanged.
pub fn split_train_val(
    manifest: &DatasetManifest,
    ratio: f64,
    seed: u64,
) -> Result<DatasetManifest> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::invalid(format!(
            "split ratio must be in (0, 1], got {ratio}"
        )));
    }
    let n = manifest.entries.len();
    // tolerance keeps exact products like 0.29·100 from rounding down
    let n_train = ((ratio * n as f64) + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng_for(seed, &[tag::SPLIT]));
    let mut entries = manifest.entries.clone();
    for (rank, &i) in order.iter().enumerate() {
        entries[i].split = if rank < n_train {
            Split::Train
        } else {
            Split::Val
        };
    }
    Ok(DatasetManifest { entries })
}
