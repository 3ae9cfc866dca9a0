//! Sampling and compositing of full-frame damage overlays.
//!
//! For every class the generator draws a count from the fitted count model
//! (scaled from 256×256 patches to the target resolution), then for every
//! artefact a physical size, a sprite of roughly that size, a position from
//! a Perlin density and a uniform rotation. The transformed sprites are
//! alpha-composited into one overlay that can be applied to an image as
//! white (negative film) or black (slide film) damage.
//!
//! Each artefact draws from its own stream seeded by
//! `(master seed, class, artefact index)`, so placements can be computed in
//! parallel and are independent of evaluation order.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use image::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bank::{ArtefactBank, ArtefactClass, ArtefactSprite, FrameGeometry};
use crate::error::{Error, Result};
use crate::io;
use crate::noise::{perlin_density, PerlinField};
use crate::par;
use crate::raster::{Grid, Mask};
use crate::seed::{self, tag};
use crate::stats::{ClassModel, ClassStatistics, COUNT_PATCH_PX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Scanned negatives: artefacts block light and show up white.
    Negative,
    /// Slides and prints: artefacts show up black.
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub class: ArtefactClass,
    /// Index into the bank's sprites of `class`.
    pub sprite_ref: usize,
    /// Centre in target pixels.
    pub center: (f64, f64),
    pub rotation: f64,
    pub scale: f64,
    /// Set when no candidate met the upscale limit.
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DamageOverlay {
    pub width_px: usize,
    pub height_px: usize,
    pub alpha: Grid<f32>,
    pub placements: Vec<Placement>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverlayOptions {
    pub max_upscale: f64,
    pub retries: usize,
    /// Use one noise field for all classes instead of one per class.
    pub shared_field: bool,
    pub density_res: usize,
}

impl Default for OverlayOptions {
    fn default() -> Self {
        Self {
            max_upscale: 4.0,
            retries: 32,
            shared_field: false,
            density_res: 128,
        }
    }
}

fn patch_scale(width_px: usize, height_px: usize) -> Result<f64> {
    if width_px == 0 || height_px == 0 {
        return Err(Error::invalid("overlay resolution must be positive"));
    }
    Ok((width_px * height_px) as f64 / (COUNT_PATCH_PX * COUNT_PATCH_PX) as f64)
}

fn sample_count<R: Rng + ?Sized>(model: &ClassModel, scale: f64, rng: &mut R) -> Result<usize> {
    let Some(cg) = model.count_gamma else {
        return Ok(0);
    };
    let draw = cg.params()?.sample(rng);
    Ok(((draw - cg.epsilon) * scale).round().max(0.0) as usize)
}

/// Draw one artefact count per class for a `width_px` × `height_px` target.
///
/// Each count is `max(0, round((g − ε) · w·h / 256²))` with `g` drawn from
/// the class count model. Classes without a count model get 0.
pub fn sample_class_counts<R: Rng + ?Sized>(
    stats: &ClassStatistics,
    width_px: usize,
    height_px: usize,
    rng: &mut R,
) -> Result<BTreeMap<ArtefactClass, usize>> {
    let scale = patch_scale(width_px, height_px)?;
    ArtefactClass::ALL
        .iter()
        .map(|&c| Ok((c, sample_count(stats.class(c), scale, rng)?)))
        .collect()
}

fn sample_area<R: Rng + ?Sized>(
    model: &ClassModel,
    class: ArtefactClass,
    um_per_px: f64,
    rng: &mut R,
) -> Result<f64> {
    let g = model.area_gamma_um2.ok_or(Error::MissingModel(class))?;
    Ok(g.sample(rng) / (um_per_px * um_per_px))
}

/// Draw `n` artefact areas in µm² and convert them to square pixels of the
/// target frame.
pub fn sample_target_areas<R: Rng + ?Sized>(
    stats: &ClassStatistics,
    class: ArtefactClass,
    n: usize,
    geometry: &FrameGeometry,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let model = stats.class(class);
    let f = geometry.microns_per_px();
    (0..n).map(|_| sample_area(model, class, f, rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpriteChoice {
    pub index: usize,
    pub scale: f64,
    pub fallback: bool,
}

fn scale_for(sprite: &ArtefactSprite, target_area: f64) -> f64 {
    if sprite.area_px2 > 0.0 {
        (target_area / sprite.area_px2).sqrt()
    } else {
        f64::INFINITY
    }
}

/// Pick a sprite whose scale to `target_area` does not exceed
/// `max_upscale`, drawing up to `retries` candidates uniformly. When none
/// qualifies, the sprite of the class with the smallest `|ln scale|` is
/// returned and flagged as a fallback.
pub fn select_sprite<R: Rng + ?Sized>(
    bank: &ArtefactBank,
    class: ArtefactClass,
    target_area: f64,
    rng: &mut R,
    max_upscale: f64,
    retries: usize,
) -> Result<SpriteChoice> {
    let sprites = bank.class(class);
    if sprites.is_empty() {
        return Err(Error::EmptyClassBank(class));
    }
    for _ in 0..retries {
        let index = rng.random_range(0..sprites.len());
        let scale = scale_for(&sprites[index], target_area);
        if scale <= max_upscale {
            return Ok(SpriteChoice {
                index,
                scale,
                fallback: false,
            });
        }
    }
    let (index, scale) = sprites
        .iter()
        .map(|s| scale_for(s, target_area))
        .enumerate()
        .min_by(|a, b| a.1.ln().abs().total_cmp(&b.1.ln().abs()))
        .expect("non-empty");
    if !scale.is_finite() {
        return Err(Error::invalid(format!(
            "every {class} sprite has an empty footprint"
        )));
    }
    Ok(SpriteChoice {
        index,
        scale,
        fallback: true,
    })
}

/// Uniform on `[-π, π]`.
pub fn sample_rotation<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-PI..=PI)
}

/// A rasterised sprite clipped to the frame.
struct Stamp {
    x0: usize,
    y0: usize,
    width: usize,
    data: Vec<f32>,
}

fn rasterize(sprite: &ArtefactSprite, p: &Placement, width: usize, height: usize) -> Option<Stamp> {
    let side = sprite.side_px;
    // reduce first so strong downscaling averages instead of skipping pixels
    let (src, residual) = if p.scale < 1.0 {
        let n = ((side as f64 * p.scale).round() as usize).max(1);
        (
            std::borrow::Cow::Owned(sprite.alpha.downsample_area(n, n)),
            p.scale * side as f64 / n as f64,
        )
    } else {
        (std::borrow::Cow::Borrowed(&sprite.alpha), p.scale)
    };
    let n = src.width() as f64;
    let (sin, cos) = p.rotation.sin_cos();
    let half = 0.5 * n * residual * (cos.abs() + sin.abs()) + 1.0;
    let (cx, cy) = p.center;
    let x0 = (cx - half).floor().max(0.0);
    let y0 = (cy - half).floor().max(0.0);
    let x1 = (cx + half).ceil().min(width as f64);
    let y1 = (cy + half).ceil().min(height as f64);
    if x1 <= x0 || y1 <= y0 {
        return None;
    }
    let (x0, y0, x1, y1) = (x0 as usize, y0 as usize, x1 as usize, y1 as usize);
    let w = x1 - x0;
    let inv = 1.0 / residual;
    let mut data = Vec::with_capacity(w * (y1 - y0));
    for y in y0..y1 {
        let dy = y as f64 + 0.5 - cy;
        for x in x0..x1 {
            let dx = x as f64 + 0.5 - cx;
            let u = (dx * cos + dy * sin) * inv + 0.5 * n;
            let v = (-dx * sin + dy * cos) * inv + 0.5 * n;
            data.push(src.sample_bilinear(u, v).clamp(0.0, 1.0));
        }
    }
    Some(Stamp {
        x0,
        y0,
        width: w,
        data,
    })
}

/// Scale, rotate (bilinear) and stamp each placement, composing with
/// `a ← a + aᵢ·(1 − a)` in placement order. Off-frame parts are dropped.
pub fn render_placements(
    placements: &[Placement],
    bank: &ArtefactBank,
    width_px: usize,
    height_px: usize,
) -> Result<Grid<f32>> {
    for p in placements {
        bank.get(p.class, p.sprite_ref)?;
        if !(p.scale > 0.0 && p.scale.is_finite()) {
            return Err(Error::invalid(format!("placement scale {}", p.scale)));
        }
    }
    let stamps = par::map(placements, |p| {
        let sprite = bank.get(p.class, p.sprite_ref).expect("checked above");
        rasterize(sprite, p, width_px, height_px)
    });
    let mut alpha = Grid::filled(width_px, height_px, 0.0f32);
    for stamp in stamps.iter().flatten() {
        for (r, row) in stamp.data.chunks(stamp.width).enumerate() {
            let y = stamp.y0 + r;
            let start = y * width_px + stamp.x0;
            let dst = &mut alpha.data_mut()[start..start + stamp.width];
            for (d, &s) in dst.iter_mut().zip(row) {
                if s > 0.0 {
                    *d += s * (1.0 - *d);
                }
            }
        }
    }
    Ok(alpha)
}

fn field_for(
    field: &PerlinField,
    seed: u64,
    class: ArtefactClass,
    opts: &OverlayOptions,
) -> PerlinField {
    let class_word = if opts.shared_field {
        u64::MAX
    } else {
        class.index() as u64
    };
    field.with_seed(seed::derive(seed, &[tag::FIELD, class_word, field.seed]))
}

/// [`generate_overlay_with`] with default options.
pub fn generate_overlay(
    stats: &ClassStatistics,
    bank: &ArtefactBank,
    width_px: usize,
    height_px: usize,
    field: &PerlinField,
    seed: u64,
) -> Result<DamageOverlay> {
    generate_overlay_with(
        stats,
        bank,
        width_px,
        height_px,
        field,
        seed,
        &OverlayOptions::default(),
    )
}

/// Sample placements for every class and render them into an overlay.
/// The result is a pure function of the arguments.
pub fn generate_overlay_with(
    stats: &ClassStatistics,
    bank: &ArtefactBank,
    width_px: usize,
    height_px: usize,
    field: &PerlinField,
    seed: u64,
    opts: &OverlayOptions,
) -> Result<DamageOverlay> {
    let placements = sample_placements(stats, bank, width_px, height_px, field, seed, opts)?;
    let alpha = render_placements(&placements, bank, width_px, height_px)?;
    Ok(DamageOverlay {
        width_px,
        height_px,
        alpha,
        placements,
        seed,
    })
}

/// Steps one to four of overlay generation: everything but the rendering.
pub fn sample_placements(
    stats: &ClassStatistics,
    bank: &ArtefactBank,
    width_px: usize,
    height_px: usize,
    field: &PerlinField,
    seed: u64,
    opts: &OverlayOptions,
) -> Result<Vec<Placement>> {
    let scale = patch_scale(width_px, height_px)?;
    let geometry = FrameGeometry::new(width_px, height_px)?;
    let um_per_px = geometry.microns_per_px();

    let mut jobs = Vec::new();
    let mut samplers = Vec::with_capacity(ArtefactClass::ALL.len());
    for class in ArtefactClass::ALL {
        let model = stats.class(class);
        let mut rng = seed::rng_for(seed, &[tag::COUNTS, class.index() as u64]);
        let n = sample_count(model, scale, &mut rng)?;
        if n > 0 {
            if bank.class(class).is_empty() {
                return Err(Error::EmptyClassBank(class));
            }
            if model.area_gamma_um2.is_none() {
                return Err(Error::MissingModel(class));
            }
            let density = perlin_density(
                &field_for(field, seed, class, opts),
                opts.density_res.max(2),
            )?;
            samplers.push(Some(density.sampler()));
        } else {
            samplers.push(None);
        }
        jobs.extend((0..n).map(|i| (class, i)));
    }

    let placements = par::map(&jobs, |&(class, i)| -> Result<Placement> {
        let mut rng = seed::rng_for(seed, &[tag::ARTEFACT, class.index() as u64, i as u64]);
        let area = sample_area(stats.class(class), class, um_per_px, &mut rng)?;
        let choice = select_sprite(bank, class, area, &mut rng, opts.max_upscale, opts.retries)?;
        let sampler = samplers[class.index()]
            .as_ref()
            .expect("built for classes with artefacts");
        let (x, y) = sampler.sample(&mut rng);
        let rotation = sample_rotation(&mut rng);
        Ok(Placement {
            class,
            sprite_ref: choice.index,
            center: (x * width_px as f64, y * height_px as f64),
            rotation,
            scale: choice.scale,
            fallback: choice.fallback,
        })
    });
    placements.into_iter().collect()
}

/// Apply an alpha map to an 8-bit RGB image.
///
/// Negative: `out = img + α·(255 − img)`; positive: `out = img·(1 − α)`,
/// rounded to the nearest integer.
pub fn apply_alpha(image: &RgbImage, alpha: &Grid<f32>, polarity: Polarity) -> Result<RgbImage> {
    let dims = (image.width() as usize, image.height() as usize);
    if dims != alpha.dims() {
        return Err(Error::DimensionMismatch {
            left: dims,
            right: alpha.dims(),
        });
    }
    let mut out = image.clone();
    for (px, &a) in out.pixels_mut().zip(alpha.data()) {
        if a <= 0.0 {
            continue;
        }
        for c in px.0.iter_mut() {
            let v = *c as f32;
            let nv = match polarity {
                Polarity::Negative => v + a * (255.0 - v),
                Polarity::Positive => v * (1.0 - a),
            };
            *c = nv.round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(out)
}

pub fn apply_overlay(
    image: &RgbImage,
    overlay: &DamageOverlay,
    polarity: Polarity,
) -> Result<RgbImage> {
    apply_alpha(image, &overlay.alpha, polarity)
}

/// Binarise an alpha map: foreground where `α ≥ tau_alpha`.
pub fn alpha_to_mask(alpha: &Grid<f32>, tau_alpha: f64) -> Result<Mask> {
    if !(tau_alpha > 0.0 && tau_alpha < 1.0) {
        return Err(Error::invalid(format!(
            "tau_alpha must be in (0, 1), got {tau_alpha}"
        )));
    }
    Ok(alpha.map(|a| a as f64 >= tau_alpha))
}

pub fn overlay_to_mask(overlay: &DamageOverlay, tau_alpha: f64) -> Result<Mask> {
    alpha_to_mask(&overlay.alpha, tau_alpha)
}

#[derive(Serialize, Deserialize)]
struct OverlaySidecar {
    seed: u64,
    width_px: usize,
    height_px: usize,
    placements: Vec<Placement>,
}

/// `overlay.png` → `overlay.placements.json`.
pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("placements.json")
}

impl DamageOverlay {
    /// Write the alpha as a 16-bit grayscale PNG plus a placements sidecar.
    pub fn save(&self, png: &Path) -> Result<()> {
        io::save_alpha16(png, &self.alpha)?;
        io::write_json(
            &sidecar_path(png),
            &OverlaySidecar {
                seed: self.seed,
                width_px: self.width_px,
                height_px: self.height_px,
                placements: self.placements.clone(),
            },
        )
    }

    /// Read an overlay back. Alpha carries the PNG's 16-bit quantisation.
    pub fn load(png: &Path) -> Result<Self> {
        let alpha = io::load_alpha(png)?;
        let side = sidecar_path(png);
        let meta: OverlaySidecar = if side.exists() {
            io::read_json(&side)?
        } else {
            OverlaySidecar {
                seed: 0,
                width_px: alpha.width(),
                height_px: alpha.height(),
                placements: Vec::new(),
            }
        };
        if meta.width_px != alpha.width() || meta.height_px != alpha.height() {
            return Err(Error::DimensionMismatch {
                left: alpha.dims(),
                right: (meta.width_px, meta.height_px),
            });
        }
        Ok(Self {
            width_px: meta.width_px,
            height_px: meta.height_px,
            alpha,
            placements: meta.placements,
            seed: meta.seed,
        })
    }
}
