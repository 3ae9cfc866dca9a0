//! Artefact statistics: per-patch counts, area summaries, Gamma fits and
//! centroid densities.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::bank::{area_px2_to_um2, ArtefactBank, ArtefactClass, FrameGeometry, PolygonAnnotation};
use crate::error::{Error, Result};
use crate::noise::DensityGrid;
use crate::par;
use crate::special::{digamma, trigamma};

/// Side of the square patches artefacts are counted in.
pub const COUNT_PATCH_PX: usize = 256;

/// Shift added to per-patch counts before fitting, so zero-count patches
/// lie inside the Gamma support. Sampling subtracts it again.
pub const COUNT_EPSILON: f64 = 0.5;

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_REL_TOL: f64 = 1e-10;
const BISECT_BRACKET: (f64, f64) = (1e-6, 1e6);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    #[serde(rename = "k")]
    pub shape_k: f64,
    #[serde(rename = "theta")]
    pub scale_theta: f64,
}

impl GammaParams {
    pub fn new(shape_k: f64, scale_theta: f64) -> Result<Self> {
        if !(shape_k > 0.0 && shape_k.is_finite() && scale_theta > 0.0 && scale_theta.is_finite()) {
            return Err(Error::invalid(format!(
                "gamma parameters must be positive and finite, got k={shape_k} theta={scale_theta}"
            )));
        }
        Ok(Self {
            shape_k,
            scale_theta,
        })
    }

    pub fn mean(&self) -> f64 {
        self.shape_k * self.scale_theta
    }

    pub fn variance(&self) -> f64 {
        self.shape_k * self.scale_theta * self.scale_theta
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Gamma::new(self.shape_k, self.scale_theta)
            .expect("parameters validated at construction")
            .sample(rng)
    }
}

/// Method-of-moments shape estimate `mean² / variance` (population variance).
pub fn moment_shape(samples: &[f64]) -> Option<f64> {
    let (mean, var) = mean_var(samples)?;
    (var > 0.0).then(|| mean * mean / var)
}

fn mean_var(samples: &[f64]) -> Option<(f64, f64)> {
    if samples.is_empty() {
        return None;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var))
}

/// Maximum-likelihood Gamma fit.
///
/// Solves `ln k − ψ(k) = ln(mean) − mean(ln x)` by Newton's method from the
/// moment estimate, with bisection on `[1e-6, 1e6]` if Newton leaves the
/// positive reals or fails to converge. `θ = mean / k`.
pub fn fit_gamma_mle(samples: &[f64]) -> Result<GammaParams> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    if let Some(&bad) = samples.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::NonPositiveSample(bad));
    }
    let (mean, var) = mean_var(samples).expect("non-empty");
    if var <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let mean_ln = samples.iter().map(|x| x.ln()).sum::<f64>() / samples.len() as f64;
    let s = mean.ln() - mean_ln;
    if !(s > 0.0) {
        // Jensen gap vanishes only for (numerically) constant samples
        return Err(Error::ZeroVariance);
    }
    let k = newton_shape(s, mean * mean / var).unwrap_or_else(|| bisect_shape(s));
    GammaParams::new(k, mean / k)
}

fn newton_shape(s: f64, k0: f64) -> Option<f64> {
    let mut k = k0;
    for _ in 0..NEWTON_MAX_ITER {
        let f = k.ln() - digamma(k) - s;
        let df = 1.0 / k - trigamma(k);
        let next = k - f / df;
        if !(next > 0.0) || !next.is_finite() {
            return None;
        }
        let converged = ((next - k) / k).abs() < NEWTON_REL_TOL;
        k = next;
        if converged {
            return Some(k);
        }
    }
    None
}

fn bisect_shape(s: f64) -> f64 {
    // ln k − ψ(k) decreases monotonically in k
    let g = |k: f64| k.ln() - digamma(k) - s;
    let (mut lo, mut hi) = BISECT_BRACKET;
    if g(lo) <= 0.0 {
        return lo;
    }
    if g(hi) >= 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) / lo < 1e-14 {
            break;
        }
    }
    (lo * hi).sqrt()
}

/// Gamma model of per-patch counts, fitted on `count + epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountGamma {
    pub k: f64,
    pub theta: f64,
    pub epsilon: f64,
}

impl CountGamma {
    pub fn params(&self) -> Result<GammaParams> {
        GammaParams::new(self.k, self.theta)
    }

    /// Expected unshifted count per patch, `k·θ − ε`.
    pub fn shifted_mean(&self) -> f64 {
        self.k * self.theta - self.epsilon
    }
}

/// Everything the generator needs to know about one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    pub count_gamma: Option<CountGamma>,
    pub area_gamma_um2: Option<GammaParams>,
    pub total_count: usize,
    pub mean_area_um2: Option<f64>,
    pub std_area_um2: Option<f64>,
}

/// Per-class statistics; serialises to the statistics JSON document keyed
/// by class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassStatistics {
    classes: BTreeMap<ArtefactClass, ClassModel>,
}

/// The on-disk statistics document is the serialised [`ClassStatistics`].
pub type StatisticsDoc = ClassStatistics;

impl ClassStatistics {
    pub fn new(classes: BTreeMap<ArtefactClass, ClassModel>) -> Result<Self> {
        for c in ArtefactClass::ALL {
            if !classes.contains_key(&c) {
                return Err(Error::MissingModel(c));
            }
        }
        Ok(Self { classes })
    }

    /// Fit counts per `patch_px` patch and areas in µm² for every class.
    ///
    /// Classes whose samples cannot be fitted (fewer than two artefacts,
    /// constant counts) get `None` for the affected model.
    pub fn from_annotations(
        annotations: &[PolygonAnnotation],
        geometry: &FrameGeometry,
        patch_px: usize,
    ) -> Result<Self> {
        let counts = patch_count_samples(annotations, geometry, patch_px)?;
        let models = par::map(&ArtefactClass::ALL, |&class| {
            let shifted: Vec<f64> = counts[&class]
                .iter()
                .map(|&c| c as f64 + COUNT_EPSILON)
                .collect();
            let count_gamma = match fit_gamma_mle(&shifted) {
                Ok(g) => Some(CountGamma {
                    k: g.shape_k,
                    theta: g.scale_theta,
                    epsilon: COUNT_EPSILON,
                }),
                Err(e) => {
                    log::warn!("{class}: no count model ({e})");
                    None
                }
            };
            let areas: Vec<f64> = annotations
                .iter()
                .filter(|a| a.class == class)
                .map(|a| area_px2_to_um2(a.clamped(geometry).area_px2(), geometry))
                .collect();
            let area_gamma_um2 = match fit_gamma_mle(&areas) {
                Ok(g) => Some(g),
                Err(e) => {
                    log::warn!("{class}: no area model ({e})");
                    None
                }
            };
            let row = summarize(class, &areas);
            (
                class,
                ClassModel {
                    count_gamma,
                    area_gamma_um2,
                    total_count: row.count,
                    mean_area_um2: row.mean_area_um2,
                    std_area_um2: row.std_area_um2,
                },
            )
        });
        Self::new(models.into_iter().collect())
    }

    pub fn class(&self, class: ArtefactClass) -> &ClassModel {
        &self.classes[&class]
    }

    pub fn class_mut(&mut self, class: ArtefactClass) -> &mut ClassModel {
        self.classes.get_mut(&class).expect("all classes present")
    }

    pub fn iter(&self) -> impl Iterator<Item = (ArtefactClass, &ClassModel)> {
        self.classes.iter().map(|(&c, m)| (c, m))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("statistics always serialise")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self =
            serde_json::from_str(text).map_err(|e| Error::MalformedDocument(e.to_string()))?;
        Self::new(s.classes)
    }
}

/// Count artefacts per `patch_px` patch, assigning each artefact to the
/// patch containing its centroid.
///
/// Annotations are grouped by frame in order of first appearance; each
/// frame contributes `ceil(w/patch)·ceil(h/patch)` samples, zero-count
/// patches included. With no annotations at all a single empty frame is
/// counted.
pub fn patch_count_samples(
    annotations: &[PolygonAnnotation],
    geometry: &FrameGeometry,
    patch_px: usize,
) -> Result<BTreeMap<ArtefactClass, Vec<u32>>> {
    if patch_px == 0 {
        return Err(Error::invalid("patch size must be positive"));
    }
    let nx = geometry.width_px.div_ceil(patch_px);
    let ny = geometry.height_px.div_ceil(patch_px);
    let mut frames: Vec<&str> = Vec::new();
    for a in annotations {
        if !frames.contains(&a.frame_id.as_str()) {
            frames.push(&a.frame_id);
        }
    }
    let n_frames = frames.len().max(1);
    let mut out: BTreeMap<ArtefactClass, Vec<u32>> = ArtefactClass::ALL
        .iter()
        .map(|&c| (c, vec![0; n_frames * nx * ny]))
        .collect();
    for a in annotations {
        let f = frames
            .iter()
            .position(|&id| id == a.frame_id)
            .expect("frame collected above");
        let (cx, cy) = a.centroid();
        let px = ((cx / patch_px as f64).floor().max(0.0) as usize).min(nx - 1);
        let py = ((cy / patch_px as f64).floor().max(0.0) as usize).min(ny - 1);
        out.get_mut(&a.class).expect("all classes")[f * nx * ny + py * nx + px] += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub class: ArtefactClass,
    pub count: usize,
    /// `None` for an empty class.
    pub mean_area_um2: Option<f64>,
    /// Sample standard deviation (n − 1); `None` below two artefacts.
    pub std_area_um2: Option<f64>,
}

fn summarize(class: ArtefactClass, areas: &[f64]) -> SummaryRow {
    let n = areas.len();
    let mean = (n > 0).then(|| areas.iter().sum::<f64>() / n as f64);
    let std = mean
        .filter(|_| n > 1)
        .map(|m| (areas.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
    SummaryRow {
        class,
        count: n,
        mean_area_um2: mean,
        std_area_um2: std,
    }
}

/// Count, mean and standard deviation of sprite areas, one row per class
/// in the fixed class order.
pub fn summarize_bank(bank: &ArtefactBank) -> Vec<SummaryRow> {
    ArtefactClass::ALL
        .iter()
        .map(|&c| {
            let areas: Vec<f64> = bank.class(c).iter().map(|s| s.area_um2).collect();
            summarize(c, &areas)
        })
        .collect()
}

/// Like [`summarize_bank`], using the annotated polygon areas.
pub fn summarize_annotations(
    annotations: &[PolygonAnnotation],
    geometry: &FrameGeometry,
) -> Vec<SummaryRow> {
    ArtefactClass::ALL
        .iter()
        .map(|&c| {
            let areas: Vec<f64> = annotations
                .iter()
                .filter(|a| a.class == c)
                .map(|a| area_px2_to_um2(a.clamped(geometry).area_px2(), geometry))
                .collect();
            summarize(c, &areas)
        })
        .collect()
}

/// Gaussian kernel density of annotation centroids in frame-normalised
/// coordinates, evaluated at the centres of a `grid_res`² grid and
/// normalised to sum to one. `bandwidth` is a fraction of the frame.
pub fn centroid_kde(
    annotations: &[PolygonAnnotation],
    geometry: &FrameGeometry,
    bandwidth: f64,
    grid_res: usize,
) -> Result<DensityGrid> {
    if annotations.is_empty() {
        return Err(Error::invalid(
            "kernel density needs at least one annotation",
        ));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid("bandwidth must be positive"));
    }
    if grid_res == 0 {
        return Err(Error::invalid("grid resolution must be positive"));
    }
    let points: Vec<(f64, f64)> = annotations
        .iter()
        .map(|a| {
            let (x, y) = a.centroid();
            (x / geometry.width_px as f64, y / geometry.height_px as f64)
        })
        .collect();
    let inv = -0.5 / (bandwidth * bandwidth);
    let step = 1.0 / grid_res as f64;
    let weights = par::map_indexed(grid_res * grid_res, |i| {
        let gx = (i % grid_res) as f64 * step + 0.5 * step;
        let gy = (i / grid_res) as f64 * step + 0.5 * step;
        points
            .iter()
            .map(|&(x, y)| ((gx - x).powi(2) + (gy - y).powi(2)) * inv)
            .map(f64::exp)
            .sum::<f64>()
    });
    DensityGrid::from_weights(grid_res, weights)
}
