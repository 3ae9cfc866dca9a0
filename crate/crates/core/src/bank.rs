//! Annotated artefacts and the sprite bank built from them.
//!
//! A scan of an empty, damaged film frame is annotated with one polygon per
//! artefact. Each polygon is measured in physical units and cut out of the
//! scan as a square, zero-padded alpha stamp ("sprite"). Sprites from real
//! scans, hand-drawn synthetic sets and the procedural scratch generator all
//! end up in one immutable [`ArtefactBank`], indexed by class.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::par;
use crate::raster::Grid;

/// Alpha at or above which a sprite pixel counts towards its footprint.
pub const FOOTPRINT_THRESHOLD: f32 = 0.1;

/// Width of the ring around an annotation's bounding box used to estimate
/// the local background.
pub const BACKGROUND_RING_PX: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtefactClass {
    Dirt,
    Dust,
    LongHair,
    ShortHair,
    Scratch,
}

impl ArtefactClass {
    pub const ALL: [ArtefactClass; 5] = [
        ArtefactClass::Dirt,
        ArtefactClass::Dust,
        ArtefactClass::LongHair,
        ArtefactClass::ShortHair,
        ArtefactClass::Scratch,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            ArtefactClass::Dirt => "dirt",
            ArtefactClass::Dust => "dust",
            ArtefactClass::LongHair => "long_hair",
            ArtefactClass::ShortHair => "short_hair",
            ArtefactClass::Scratch => "scratch",
        }
    }
}

impl fmt::Display for ArtefactClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ArtefactClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArtefactClass::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

/// Pixel size and physical size of a scanned 35mm frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameGeometry {
    pub width_px: usize,
    pub height_px: usize,
    #[serde(default = "default_long_edge_mm")]
    pub long_edge_mm: f64,
    #[serde(default = "default_short_edge_mm")]
    pub short_edge_mm: f64,
}

fn default_long_edge_mm() -> f64 {
    35.0
}

fn default_short_edge_mm() -> f64 {
    24.0
}

impl FrameGeometry {
    /// A 35x24 mm frame scanned at `width_px` x `height_px`.
    pub fn new(width_px: usize, height_px: usize) -> Result<Self> {
        Self::with_size_mm(width_px, height_px, 35.0, 24.0)
    }

    pub fn with_size_mm(
        width_px: usize,
        height_px: usize,
        long_edge_mm: f64,
        short_edge_mm: f64,
    ) -> Result<Self> {
        if width_px == 0 || height_px == 0 {
            return Err(Error::invalid("frame dimensions must be positive"));
        }
        if !(long_edge_mm > 0.0 && short_edge_mm > 0.0) {
            return Err(Error::invalid("frame size in mm must be positive"));
        }
        Ok(Self {
            width_px,
            height_px,
            long_edge_mm,
            short_edge_mm,
        })
    }

    pub fn long_edge_px(&self) -> usize {
        self.width_px.max(self.height_px)
    }

    /// Microns per pixel along the long edge, used for both axes.
    pub fn microns_per_px(&self) -> f64 {
        self.long_edge_mm * 1000.0 / self.long_edge_px() as f64
    }
}

pub type Point = (f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct PolygonAnnotation {
    pub frame_id: String,
    pub class: ArtefactClass,
    pub vertices: Vec<Point>,
}

impl PolygonAnnotation {
    pub fn area_px2(&self) -> f64 {
        // construction guarantees >= 3 vertices
        shoelace(&self.vertices).abs()
    }

    /// Area centroid, falling back to the vertex mean for degenerate
    /// (zero-area) polygons.
    pub fn centroid(&self) -> Point {
        let v = &self.vertices;
        let n = v.len();
        let mut cross_sum = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for i in 0..n {
            let (x0, y0) = v[i];
            let (x1, y1) = v[(i + 1) % n];
            let c = x0 * y1 - x1 * y0;
            cross_sum += c;
            cx += (x0 + x1) * c;
            cy += (y0 + y1) * c;
        }
        if cross_sum.abs() < 1e-12 {
            let (sx, sy) = v.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
            return (sx / n as f64, sy / n as f64);
        }
        let a = cross_sum / 2.0;
        (cx / (6.0 * a), cy / (6.0 * a))
    }

    /// Copy with every vertex clamped into the frame.
    pub fn clamped(&self, geometry: &FrameGeometry) -> Self {
        let (w, h) = (geometry.width_px as f64, geometry.height_px as f64);
        Self {
            frame_id: self.frame_id.clone(),
            class: self.class,
            vertices: self
                .vertices
                .iter()
                .map(|&(x, y)| (x.clamp(0.0, w), y.clamp(0.0, h)))
                .collect(),
        }
    }
}

#[derive(Deserialize)]
struct RawAnnotation {
    frame_id: String,
    class: String,
    polygon: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct RawAnnotationOut<'a> {
    frame_id: &'a str,
    class: ArtefactClass,
    polygon: Vec<[f64; 2]>,
}

/// Parse a JSON annotation document (an array of
/// `{"frame_id", "class", "polygon"}` records). Order is preserved.
pub fn parse_annotations(text: &str) -> Result<Vec<PolygonAnnotation>> {
    let raw: Vec<RawAnnotation> =
        serde_json::from_str(text).map_err(|e| Error::MalformedDocument(e.to_string()))?;
    raw.into_iter()
        .map(|r| {
            let class = r.class.parse()?;
            if r.polygon.len() < 3 {
                return Err(Error::TooFewVertices(r.polygon.len()));
            }
            if r.polygon.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::MalformedDocument(format!(
                    "non-finite vertex in frame {}",
                    r.frame_id
                )));
            }
            Ok(PolygonAnnotation {
                frame_id: r.frame_id,
                class,
                vertices: r.polygon.into_iter().map(|[x, y]| (x, y)).collect(),
            })
        })
        .collect()
}

pub fn annotations_to_json(annotations: &[PolygonAnnotation]) -> String {
    let out: Vec<_> = annotations
        .iter()
        .map(|a| RawAnnotationOut {
            frame_id: &a.frame_id,
            class: a.class,
            polygon: a.vertices.iter().map(|&(x, y)| [x, y]).collect(),
        })
        .collect();
    serde_json::to_string(&out).expect("annotations always serialise")
}

pub fn load_annotations(path: &Path) -> Result<Vec<PolygonAnnotation>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text)
}

fn shoelace(v: &[Point]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (x0, y0) = v[i];
        let (x1, y1) = v[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc / 2.0
}

/// Absolute shoelace area of a simple polygon in square pixels.
pub fn polygon_area_px2(vertices: &[Point]) -> Result<f64> {
    if vertices.len() < 3 {
        return Err(Error::TooFewVertices(vertices.len()));
    }
    Ok(shoelace(vertices).abs())
}

pub fn area_px2_to_um2(area_px2: f64, geometry: &FrameGeometry) -> f64 {
    let f = geometry.microns_per_px();
    area_px2 * f * f
}

/// Even-odd rule point-in-polygon test.
pub fn point_in_polygon(p: Point, vertices: &[Point]) -> bool {
    let (px, py) = p;
    let n = vertices.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = vertices[i];
        let (xj, yj) = vertices[j];
        if (yi > py) != (yj > py) {
            let x_cross = xi + (py - yi) * (xj - xi) / (yj - yi);
            if px < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Real,
    SyntheticDrawn,
    SyntheticScratch,
}

/// A square alpha stamp of one artefact.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtefactSprite {
    pub alpha: Grid<f32>,
    pub side_px: usize,
    pub class: ArtefactClass,
    pub area_px2: f64,
    pub area_um2: f64,
    pub provenance: Provenance,
}

impl ArtefactSprite {
    /// Wrap an alpha grid, zero-padding it to a square and measuring its
    /// footprint. Values are clipped into `[0, 1]`.
    pub fn from_alpha(
        alpha: Grid<f32>,
        class: ArtefactClass,
        provenance: Provenance,
        microns_per_px: f64,
    ) -> Self {
        let alpha = pad_to_square(&alpha.map(|a| {
            if a.is_finite() {
                a.clamp(0.0, 1.0)
            } else {
                0.0
            }
        }));
        let area_px2 = footprint_px2(&alpha);
        Self {
            side_px: alpha.width(),
            alpha,
            class,
            area_px2,
            area_um2: area_px2 * microns_per_px * microns_per_px,
            provenance,
        }
    }

    pub fn microns_per_px(&self) -> Option<f64> {
        (self.area_px2 > 0.0).then(|| (self.area_um2 / self.area_px2).sqrt())
    }
}

pub fn footprint_px2(alpha: &Grid<f32>) -> f64 {
    alpha
        .data()
        .iter()
        .filter(|&&a| a >= FOOTPRINT_THRESHOLD)
        .count() as f64
}

fn pad_to_square(g: &Grid<f32>) -> Grid<f32> {
    let (w, h) = g.dims();
    if w == h {
        return g.clone();
    }
    let side = w.max(h);
    let ox = (side - w) / 2;
    let oy = (side - h) / 2;
    Grid::from_fn(side, side, |x, y| {
        if x >= ox && x < ox + w && y >= oy && y < oy + h {
            g.get(x - ox, y - oy)
        } else {
            0.0
        }
    })
}

fn median(values: &mut [f32]) -> Option<f32> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f32::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Cut one annotated artefact out of a grayscale scan (luminance values).
///
/// Alpha is the absolute deviation from the background (median of a ring
/// around the bounding box) divided by the largest deviation inside the
/// polygon. Pixels whose centre is outside the polygon are exactly 0. The
/// result is zero-padded symmetrically to a square of side
/// `max(bbox width, bbox height)`.
pub fn extract_sprite(
    scan: &Grid<f32>,
    annotation: &PolygonAnnotation,
    geometry: &FrameGeometry,
) -> Result<ArtefactSprite> {
    let (sw, sh) = scan.dims();
    let v = &annotation.vertices;
    if v.len() < 3 {
        return Err(Error::TooFewVertices(v.len()));
    }
    let (min_x, max_x, min_y, max_y) = v.iter().fold(
        (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    if max_x <= 0.0 || max_y <= 0.0 || min_x >= sw as f64 || min_y >= sh as f64 {
        return Err(Error::OutsideScan);
    }
    let x0 = (min_x.floor().max(0.0) as usize).min(sw - 1);
    let y0 = (min_y.floor().max(0.0) as usize).min(sh - 1);
    let x1 = (max_x.ceil().min(sw as f64) as usize).max(x0 + 1);
    let y1 = (max_y.ceil().min(sh as f64) as usize).max(y0 + 1);
    let (bw, bh) = (x1 - x0, y1 - y0);

    let mut inside = Grid::from_fn(bw, bh, |x, y| {
        point_in_polygon(((x0 + x) as f64 + 0.5, (y0 + y) as f64 + 0.5), v)
    });
    if inside.is_empty_mask() {
        // polygon thinner than a pixel: keep the pixel under its centroid
        let (cx, cy) = annotation.centroid();
        let cx = (cx.floor().max(x0 as f64) as usize).min(x1 - 1);
        let cy = (cy.floor().max(y0 as f64) as usize).min(y1 - 1);
        inside.set(cx - x0, cy - y0, true);
    }

    let background = {
        let r = BACKGROUND_RING_PX;
        let rx0 = x0.saturating_sub(r);
        let ry0 = y0.saturating_sub(r);
        let rx1 = (x1 + r).min(sw);
        let ry1 = (y1 + r).min(sh);
        let mut ring = Vec::new();
        for y in ry0..ry1 {
            for x in rx0..rx1 {
                if x < x0 || x >= x1 || y < y0 || y >= y1 {
                    ring.push(scan.get(x, y));
                }
            }
        }
        if ring.is_empty() {
            for y in 0..bh {
                for x in 0..bw {
                    if !inside.get(x, y) {
                        ring.push(scan.get(x0 + x, y0 + y));
                    }
                }
            }
        }
        median(&mut ring).unwrap_or(0.0)
    };

    let deviation = Grid::from_fn(bw, bh, |x, y| {
        if inside.get(x, y) {
            (scan.get(x0 + x, y0 + y) - background).abs()
        } else {
            0.0
        }
    });
    let max_dev = deviation.data().iter().copied().fold(0.0f32, f32::max);
    let alpha = Grid::from_fn(bw, bh, |x, y| {
        if !inside.get(x, y) {
            0.0
        } else if max_dev > 0.0 {
            (deviation.get(x, y) / max_dev).clamp(0.0, 1.0)
        } else {
            1.0
        }
    });
    Ok(ArtefactSprite::from_alpha(
        alpha,
        annotation.class,
        Provenance::Real,
        geometry.microns_per_px(),
    ))
}

/// Resample a square alpha grid to `new_side`. Reductions average over the
/// covered source area; enlargements are bilinear.
const RESCALE_REFINEMENTS: usize = 4;
const RESCALE_TOLERANCE: f64 = 0.1;

pub(crate) fn resample_square(alpha: &Grid<f32>, new_side: usize) -> Grid<f32> {
    let side = alpha.width();
    let new_side = new_side.max(1);
    if new_side == side {
        return alpha.clone();
    }
    if new_side < side {
        return alpha.downsample_area(new_side, new_side);
    }
    let k = side as f64 / new_side as f64;
    Grid::from_fn(new_side, new_side, |x, y| {
        alpha
            .sample_bilinear((x as f64 + 0.5) * k, (y as f64 + 0.5) * k)
            .clamp(0.0, 1.0)
    })
}

/// Uniformly rescale a sprite so its footprint approaches `target_area_px2`.
///
/// The scale factor starts at `sqrt(target / area)`. Resampling softens
/// edges, which inflates the thresholded footprint of small results, so the
/// side is corrected from the measured footprint a few times and the
/// closest candidate is kept. Opacity is left unchanged.
pub fn rescale_sprite(sprite: &ArtefactSprite, target_area_px2: f64) -> Result<ArtefactSprite> {
    if !(target_area_px2 > 0.0) || !target_area_px2.is_finite() {
        return Err(Error::invalid(format!(
            "target area must be positive, got {target_area_px2}"
        )));
    }
    let area = if sprite.area_px2 > 0.0 {
        sprite.area_px2
    } else {
        (sprite.side_px * sprite.side_px) as f64
    };
    let s = (target_area_px2 / area).sqrt();
    let mut side = ((sprite.side_px as f64 * s).round() as usize).max(1);
    let mut best: Option<(f64, usize, Grid<f32>, f64)> = None;
    let mut tried = Vec::new();
    for _ in 0..RESCALE_REFINEMENTS {
        if tried.contains(&side) {
            break;
        }
        tried.push(side);
        let alpha = resample_square(&sprite.alpha, side);
        let fp = footprint_px2(&alpha);
        let err = (fp / target_area_px2 - 1.0).abs();
        if best.as_ref().is_none_or(|b| err < b.0) {
            best = Some((err, side, alpha, fp));
        }
        if err <= RESCALE_TOLERANCE || fp <= 0.0 {
            break;
        }
        side = ((side as f64 * (target_area_px2 / fp).sqrt()).round() as usize).max(1);
    }
    let (_, new_side, alpha, area_px2) = best.expect("at least one candidate");
    let um_per_px2 = if sprite.area_px2 > 0.0 {
        sprite.area_um2 / sprite.area_px2
    } else {
        0.0
    };
    Ok(ArtefactSprite {
        side_px: new_side,
        alpha,
        class: sprite.class,
        area_px2,
        area_um2: area_px2 * um_per_px2,
        provenance: sprite.provenance,
    })
}

/// Parameters of the procedural scratch generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScratchConfig {
    /// Inclusive range of stroke lengths in pixels.
    pub length_px: (f64, f64),
    /// Inclusive range of stroke widths in pixels.
    pub width_px: (f64, f64),
    /// Largest sideways offset of the Bézier control point, as a fraction
    /// of the stroke length.
    pub max_curvature: f64,
    pub microns_per_px: f64,
}

impl Default for ScratchConfig {
    fn default() -> Self {
        Self {
            length_px: (60.0, 400.0),
            width_px: (1.0, 4.0),
            max_curvature: 0.1,
            microns_per_px: 35_000.0 / 4944.0,
        }
    }
}

impl ScratchConfig {
    fn validate(&self) -> Result<()> {
        let (l0, l1) = self.length_px;
        let (w0, w1) = self.width_px;
        if !(l0 > 0.0 && l0 <= l1 && l1.is_finite()) {
            return Err(Error::invalid(format!(
                "bad scratch length range {l0}..{l1}"
            )));
        }
        if !(w0 > 0.0 && w0 <= w1 && w1.is_finite()) {
            return Err(Error::invalid(format!(
                "bad scratch width range {w0}..{w1}"
            )));
        }
        if !(self.max_curvature >= 0.0 && self.max_curvature.is_finite()) {
            return Err(Error::invalid("scratch curvature must be finite and >= 0"));
        }
        if !(self.microns_per_px > 0.0) {
            return Err(Error::invalid("microns per pixel must be positive"));
        }
        Ok(())
    }
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Draw a thin, gently curved scratch as a quadratic Bézier stroke with
/// anti-aliased edges and tapered ends.
pub fn synth_scratch<R: Rng + ?Sized>(
    params: &ScratchConfig,
    rng: &mut R,
) -> Result<ArtefactSprite> {
    params.validate()?;
    let length = uniform_in(rng, params.length_px);
    draw_scratch(params, length, rng)
}

/// Like [`synth_scratch`], but the stroke length is `area_px2 / width`
/// (clamped to the configured length range), so the scratch footprint
/// follows a sampled area.
pub fn synth_scratch_with_area<R: Rng + ?Sized>(
    params: &ScratchConfig,
    area_px2: f64,
    rng: &mut R,
) -> Result<ArtefactSprite> {
    params.validate()?;
    if !(area_px2 > 0.0) {
        return Err(Error::invalid("scratch area must be positive"));
    }
    let mean_width = 0.5 * (params.width_px.0 + params.width_px.1);
    let length = (area_px2 / mean_width).clamp(params.length_px.0, params.length_px.1);
    draw_scratch(params, length, rng)
}

fn draw_scratch<R: Rng + ?Sized>(
    params: &ScratchConfig,
    length: f64,
    rng: &mut R,
) -> Result<ArtefactSprite> {
    let width = uniform_in(rng, params.width_px);
    let bend = params.max_curvature * length * rng.random_range(-1.0..=1.0);
    let opacity = rng.random_range(0.6..=1.0) as f32;

    let side = (length + width + 4.0).ceil() as usize;
    let c = side as f64 / 2.0;
    let p0 = (c - length / 2.0, c);
    let p1 = (c, c + bend);
    let p2 = (c + length / 2.0, c);
    const SEGMENTS: usize = 64;
    let pts: Vec<Point> = (0..=SEGMENTS)
        .map(|i| {
            let t = i as f64 / SEGMENTS as f64;
            let a = (1.0 - t) * (1.0 - t);
            let b = 2.0 * (1.0 - t) * t;
            let d = t * t;
            (
                a * p0.0 + b * p1.0 + d * p2.0,
                a * p0.1 + b * p1.1 + d * p2.1,
            )
        })
        .collect();
    // arc-length parameter of each vertex, for end tapering
    let mut arc = vec![0.0; pts.len()];
    for i in 1..pts.len() {
        arc[i] = arc[i - 1] + (pts[i].0 - pts[i - 1].0).hypot(pts[i].1 - pts[i - 1].1);
    }
    let total = arc[SEGMENTS].max(1e-9);
    let half_w = width / 2.0;
    let y_lo = (c.min(c + bend / 2.0) - half_w - 2.0).floor().max(0.0) as usize;
    let y_hi = ((c.max(c + bend / 2.0) + half_w + 2.0).ceil() as usize).min(side);

    let mut alpha = Grid::filled(side, side, 0.0f32);
    for y in y_lo..y_hi {
        for x in 0..side {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let mut best = f64::INFINITY;
            let mut best_s = 0.0;
            for i in 0..SEGMENTS {
                let (a, b) = (pts[i], pts[i + 1]);
                let (dx, dy) = (b.0 - a.0, b.1 - a.1);
                let len2 = dx * dx + dy * dy;
                let t = if len2 > 0.0 {
                    (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let d = (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy);
                if d < best {
                    best = d;
                    best_s = arc[i] + t * (arc[i + 1] - arc[i]);
                }
            }
            let coverage = (half_w + 0.5 - best).clamp(0.0, 1.0);
            if coverage > 0.0 {
                let u = best_s / total;
                let taper = (u.min(1.0 - u) / 0.1).clamp(0.0, 1.0).sqrt();
                alpha.set(x, y, opacity * (coverage * taper) as f32);
            }
        }
    }
    Ok(ArtefactSprite::from_alpha(
        alpha,
        ArtefactClass::Scratch,
        Provenance::SyntheticScratch,
        params.microns_per_px,
    ))
}

/// Immutable, class-indexed collection of sprites.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtefactBank {
    geometry: FrameGeometry,
    sprites: BTreeMap<ArtefactClass, Vec<ArtefactSprite>>,
}

impl ArtefactBank {
    pub fn new(geometry: FrameGeometry, sprites: impl IntoIterator<Item = ArtefactSprite>) -> Self {
        let mut map: BTreeMap<ArtefactClass, Vec<ArtefactSprite>> = ArtefactClass::ALL
            .iter()
            .map(|&c| (c, Vec::new()))
            .collect();
        for s in sprites {
            map.entry(s.class).or_default().push(s);
        }
        Self {
            geometry,
            sprites: map,
        }
    }

    /// Extract one sprite per annotation. `scans` maps frame ids to
    /// luminance images; every annotation's frame must be present.
    pub fn from_scans(
        annotations: &[PolygonAnnotation],
        scans: &HashMap<String, Grid<f32>>,
        geometry: FrameGeometry,
    ) -> Result<Self> {
        let sprites = par::map(annotations, |a| {
            let scan = scans
                .get(&a.frame_id)
                .ok_or_else(|| Error::invalid(format!("no scan for frame {:?}", a.frame_id)))?;
            extract_sprite(scan, &a.clamped(&geometry), &geometry)
        });
        let sprites = sprites.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Self::new(geometry, sprites))
    }

    /// A new bank with `extra` sprites appended after the existing ones.
    pub fn extended(&self, extra: impl IntoIterator<Item = ArtefactSprite>) -> Self {
        let mut sprites = self.sprites.clone();
        for s in extra {
            sprites.entry(s.class).or_default().push(s);
        }
        Self {
            geometry: self.geometry,
            sprites,
        }
    }

    pub fn geometry(&self) -> &FrameGeometry {
        &self.geometry
    }

    pub fn class(&self, class: ArtefactClass) -> &[ArtefactSprite] {
        self.sprites.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn get(&self, class: ArtefactClass, index: usize) -> Result<&ArtefactSprite> {
        self.class(class)
            .get(index)
            .ok_or(Error::InvalidSpriteRef(index))
    }

    pub fn len(&self) -> usize {
        self.sprites.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counts(&self) -> BTreeMap<ArtefactClass, usize> {
        self.sprites.iter().map(|(&c, v)| (c, v.len())).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ArtefactSprite> {
        self.sprites.values().flatten()
    }

    /// Write the bank as one 8-bit PNG plus JSON sidecar per sprite and a
    /// `bank.json` index.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut entries = Vec::with_capacity(self.len());
        for (class, sprites) in &self.sprites {
            for (i, s) in sprites.iter().enumerate() {
                let stem = format!("sprites/{}/{i:05}", class.label());
                io::save_alpha8(&dir.join(format!("{stem}.png")), &s.alpha)?;
                io::write_json(
                    &dir.join(format!("{stem}.json")),
                    &SpriteSidecar {
                        class: s.class,
                        provenance: s.provenance,
                        area_px2: s.area_px2,
                        area_um2: s.area_um2,
                        side_px: s.side_px,
                    },
                )?;
                entries.push(stem);
            }
        }
        io::write_json(
            &dir.join("bank.json"),
            &BankIndex {
                geometry: self.geometry,
                sprites: entries,
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let index: BankIndex = io::read_json(&dir.join("bank.json"))?;
        let sprites = par::map(&index.sprites, |stem| -> Result<ArtefactSprite> {
            let meta: SpriteSidecar = io::read_json(&dir.join(format!("{stem}.json")))?;
            let alpha = io::load_alpha(&dir.join(format!("{stem}.png")))?;
            if alpha.width() != meta.side_px || alpha.height() != meta.side_px {
                return Err(Error::invalid(format!(
                    "{stem}: sprite is {:?}, sidecar says side {}",
                    alpha.dims(),
                    meta.side_px
                )));
            }
            Ok(ArtefactSprite {
                alpha,
                side_px: meta.side_px,
                class: meta.class,
                area_px2: meta.area_px2,
                area_um2: meta.area_um2,
                provenance: meta.provenance,
            })
        });
        let sprites = sprites.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Self::new(index.geometry, sprites))
    }
}

#[derive(Serialize, Deserialize)]
struct SpriteSidecar {
    class: ArtefactClass,
    provenance: Provenance,
    area_px2: f64,
    area_um2: f64,
    side_px: usize,
}

#[derive(Serialize, Deserialize)]
struct BankIndex {
    geometry: FrameGeometry,
    sprites: Vec<String>,
}

/// Load hand-drawn sprites from `dir/<class label>/*.png`.
///
/// Sub-directory names must be class labels. Files are read in sorted order.
pub fn load_synthetic_dir(dir: &Path, microns_per_px: f64) -> Result<Vec<ArtefactSprite>> {
    let mut out = Vec::new();
    let mut class_dirs: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    for class_dir in class_dirs {
        let name = class_dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        let class: ArtefactClass = name.parse()?;
        let mut files: Vec<_> = std::fs::read_dir(&class_dir)
            .map_err(|e| Error::io(&class_dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
            .collect();
        files.sort();
        for f in files {
            let alpha = io::load_alpha(&f)?;
            out.push(ArtefactSprite::from_alpha(
                alpha,
                class,
                Provenance::SyntheticDrawn,
                microns_per_px,
            ));
        }
    }
    Ok(out)
}
