//! Restoration and detection quality measures.
//!
//! Image metrics take [`FloatImage`]s on a 0-255 scale. Mask metrics work
//! on boolean masks, and the point-cloud distance compares foreground
//! pixels as sets of frame-normalised points.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::raster::{FloatImage, Grid, Mask};
use crate::seed;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const DEFAULT_POINT_BUDGET: usize = 1024;
pub const EMD_BUDGET: usize = 512;
const EMD_RESAMPLE_SEED: u64 = 0x454d_445f_7375_6273;

fn check_images(a: &FloatImage, b: &FloatImage) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            left: a.dims(),
            right: b.dims(),
        });
    }
    if a.channels != b.channels {
        return Err(Error::invalid(format!(
            "channel counts differ: {} vs {}",
            a.channels, b.channels
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over all channels. Identical images
/// give `f64::INFINITY`.
pub fn psnr(a: &FloatImage, b: &FloatImage, max_value: f64) -> Result<f64> {
    check_images(a, b)?;
    if !(max_value > 0.0) {
        return Err(Error::invalid("max value must be positive"));
    }
    let sse: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    let n = a.data.len();
    if n == 0 {
        return Err(Error::invalid("empty image"));
    }
    let mse = sse / n as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_value * max_value / mse).log10())
}

fn luminance(img: &FloatImage) -> Result<Vec<f64>> {
    match img.channels {
        1 => Ok(img.data.iter().map(|&v| v as f64).collect()),
        c if c >= 3 => Ok(img
            .data
            .chunks_exact(c)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()),
        c => Err(Error::invalid(format!(
            "cannot take luminance of {c} channels"
        ))),
    }
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable "valid" filtering: output is `(w - 10) x (h - 10)`.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let horiz: Vec<Vec<f64>> = par::map_indexed(h, |y| {
        let row = &src[y * w..(y + 1) * w];
        (0..ow)
            .map(|x| {
                k.iter()
                    .zip(&row[x..x + SSIM_WINDOW])
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    });
    par::map_indexed(oh, |y| {
        (0..ow)
            .map(|x| {
                (0..SSIM_WINDOW)
                    .map(|j| k[j] * horiz[y + j][x])
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
    })
    .concat()
}

/// Mean structural similarity of the luminance channels, with an 11x11
/// Gaussian window (sigma 1.5) over valid positions only.
pub fn ssim(a: &FloatImage, b: &FloatImage) -> Result<f64> {
    check_images(a, b)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::TooSmall {
            width: w,
            height: h,
            min: SSIM_WINDOW,
        });
    }
    let x = luminance(a)?;
    let y = luminance(b)?;
    let k = gaussian_kernel();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
    let mu_x = filter_valid(&x, w, h, &k);
    let mu_y = filter_valid(&y, w, h, &k);
    let e_xx = filter_valid(&xx, w, h, &k);
    let e_yy = filter_valid(&yy, w, h, &k);
    let e_xy = filter_valid(&xy, w, h, &k);
    let c1 = (SSIM_K1 * 255.0).powi(2);
    let c2 = (SSIM_K2 * 255.0).powi(2);
    let total: f64 = (0..mu_x.len())
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = e_xx[i] - mx * mx;
            let vy = e_yy[i] - my * my;
            let cxy = e_xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mu_x.len() as f64)
}

/// Intersection over union and F1 of two masks. Two empty masks agree
/// perfectly (1, 1).
pub fn iou_f1(a: &Mask, b: &Mask) -> Result<(f64, f64)> {
    a.ensure_same_dims(b)?;
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&p, &q) in a.data().iter().zip(b.data()) {
        na += p as usize;
        nb += q as usize;
        inter += (p && q) as usize;
    }
    if na == 0 && nb == 0 {
        return Ok((1.0, 1.0));
    }
    let union = na + nb - inter;
    Ok((
        inter as f64 / union as f64,
        2.0 * inter as f64 / (na + nb) as f64,
    ))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<(f64, f64)>,
}

impl PointCloud {
    pub fn new(points: Vec<(f64, f64)>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.points.iter().map(|&(x, y)| (x + dx, y + dy)).collect())
    }

    fn subsample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Self {
        if self.len() <= n {
            return self.clone();
        }
        let mut idx = rand::seq::index::sample(rng, self.len(), n).into_vec();
        idx.sort_unstable();
        Self::new(idx.into_iter().map(|i| self.points[i]).collect())
    }
}

/// Foreground pixel centres divided by the image diagonal, subsampled
/// without replacement down to `n_max`.
pub fn mask_to_points<R: Rng + ?Sized>(mask: &Mask, n_max: usize, rng: &mut R) -> PointCloud {
    let (w, h) = mask.dims();
    let diag = ((w * w + h * h) as f64).sqrt();
    let pts = mask
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(i, _)| (((i % w) as f64 + 0.5) / diag, ((i / w) as f64 + 0.5) / diag))
        .collect();
    PointCloud::new(pts).subsample(n_max, rng)
}

/// Minimum-cost perfect matching on a square cost matrix (row-major).
/// Returns the column assigned to each row.
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    // potentials formulation, 1-based with a virtual column 0
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

#[inline]
fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Earth mover's distance: the minimum mean Euclidean matching cost after
/// equalising both clouds to `min(|P|, |Q|, 512)` points.
pub fn emd(p: &PointCloud, q: &PointCloud) -> f64 {
    emd_with_budget(p, q, EMD_BUDGET)
}

pub fn emd_with_budget(p: &PointCloud, q: &PointCloud, budget: usize) -> f64 {
    match (p.is_empty(), q.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return 1.0,
        _ => {}
    }
    let m = p.len().min(q.len()).min(budget.max(1));
    let mut rng = seed::rng_for(
        EMD_RESAMPLE_SEED,
        &[p.len() as u64, q.len() as u64, m as u64],
    );
    let p = p.subsample(m, &mut rng);
    let q = q.subsample(m, &mut rng);
    let cost: Vec<f64> = (0..m * m)
        .map(|i| dist(p.points[i / m], q.points[i % m]))
        .collect();
    let assign = hungarian(&cost, m);
    let total: f64 = assign
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * m + j])
        .sum();
    total / m as f64
}

/// Per-pixel maximum absolute channel difference.
pub fn difference_map(a: &FloatImage, b: &FloatImage) -> Result<Grid<f32>> {
    check_images(a, b)?;
    let c = a.channels;
    let data = a
        .data
        .chunks_exact(c)
        .zip(b.data.chunks_exact(c))
        .map(|(p, q)| {
            p.iter()
                .zip(q)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f32, f32::max)
        })
        .collect();
    Grid::from_vec(a.width, a.height, data)
}

/// Binarise the damaged/restored difference at each threshold (`>= t`)
/// and keep the mask that `scorer` rates highest. Ties go to the smallest
/// threshold.
pub fn derive_gt_mask<F>(
    damaged: &FloatImage,
    restored: &FloatImage,
    thresholds: &[u32],
    scorer: F,
) -> Result<(Mask, u32)>
where
    F: Fn(&Mask) -> f64,
{
    if thresholds.is_empty() {
        return Err(Error::EmptyThresholds);
    }
    let diff = difference_map(damaged, restored)?;
    let mut ts = thresholds.to_vec();
    ts.sort_unstable();
    ts.dedup();
    let mut best: Option<(f64, Mask, u32)> = None;
    for t in ts {
        let mask = diff.map(|d| d >= t as f32);
        let mut score = scorer(&mask);
        if score.is_nan() {
            score = f64::NEG_INFINITY;
        }
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, mask, t));
        }
    }
    let (_, mask, t) = best.expect("thresholds are non-empty");
    Ok((mask, t))
}

/// Non-finite-aware float (de)serialisation: infinities become `"inf"` /
/// `"-inf"` strings so reports stay valid JSON.
mod ext_float {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn parse<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Text(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::custom(format!("not a number: {other}"))),
            },
        }
    }

    fn write<S: Serializer>(v: f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(v) => write(*v, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Option::<Repr>::deserialize(d)?.map(parse).transpose()
        }
    }

    pub mod plain {
        use super::*;

        pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
            write(*v, s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            parse(Repr::deserialize(d)?)
        }
    }
}

/// Metrics for one image or mask pair. Absent measures are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(
        default,
        with = "ext_float::option",
        skip_serializing_if = "Option::is_none"
    )]
    pub psnr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lpips: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emd: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_threshold: Option<u32>,
}

impl MetricsReport {
    pub fn for_images(a: &FloatImage, b: &FloatImage) -> Result<Self> {
        Ok(Self {
            psnr_db: Some(psnr(a, b, 255.0)?),
            ssim: Some(ssim(a, b)?),
            ..Self::default()
        })
    }

    /// IoU, F1 and EMD of a predicted mask against a reference mask.
    /// `seed` drives the point subsampling.
    pub fn for_masks(predicted: &Mask, reference: &Mask, seed: u64) -> Result<Self> {
        let (iou, f1) = iou_f1(predicted, reference)?;
        let mut rng = seed::rng(seed);
        let p = mask_to_points(predicted, DEFAULT_POINT_BUDGET, &mut rng);
        let q = mask_to_points(reference, DEFAULT_POINT_BUDGET, &mut rng);
        Ok(Self {
            iou: Some(iou),
            f1: Some(f1),
            emd: Some(emd(&p, &q)),
            ..Self::default()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(with = "ext_float::plain")]
    pub mean: f64,
    #[serde(with = "ext_float::plain")]
    pub std: f64,
    pub n: usize,
}

impl Summary {
    /// Mean and sample standard deviation (zero for a single value).
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if values.iter().all(|&v| v == values[0]) {
            0.0
        } else if !mean.is_finite() {
            // finite and infinite PSNRs mixed: no meaningful spread
            f64::NAN
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Self { mean, std, n })
    }
}

/// Mean / std of every measure over a batch of reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psnr_db: Option<Summary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssim: Option<Summary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lpips: Option<Summary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<Summary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<Summary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emd: Option<Summary>,
}

pub fn aggregate(reports: &[MetricsReport]) -> AggregateReport {
    let collect = |f: fn(&MetricsReport) -> Option<f64>| {
        let v: Vec<f64> = reports.iter().filter_map(f).collect();
        Summary::of(&v)
    };
    AggregateReport {
        count: reports.len(),
        master_seed: None,
        psnr_db: collect(|r| r.psnr_db),
        ssim: collect(|r| r.ssim),
        lpips: collect(|r| r.lpips),
        iou: collect(|r| r.iou),
        f1: collect(|r| r.f1),
        emd: collect(|r| r.emd),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(w: usize, h: usize, c: usize, v: f32) -> FloatImage {
        FloatImage::from_vec(w, h, c, vec![v; w * h * c]).unwrap()
    }

    fn square(w: usize, h: usize, x0: usize, y0: usize, side: usize) -> Mask {
        Grid::from_fn(w, h, |x, y| {
            (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y)
        })
    }

    #[test]
    fn psnr_cases() {
        let a = constant(8, 8, 3, 100.0);
        assert_eq!(psnr(&a, &a, 255.0).unwrap(), f64::INFINITY);
        let b = constant(8, 8, 3, 116.0);
        let v = psnr(&a, &b, 255.0).unwrap();
        assert!((v - 20.0 * (255.0f64 / 16.0).log10()).abs() < 1e-9);
        assert!((v - 24.05).abs() < 0.01);
        let z = constant(8, 8, 3, 0.0);
        let f = constant(8, 8, 3, 255.0);
        assert!(psnr(&z, &f, 255.0).unwrap().abs() < 1e-12);
        assert!(matches!(
            psnr(&a, &constant(8, 9, 3, 0.0), 255.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ssim_cases() {
        let a = constant(16, 16, 3, 100.0);
        let b = constant(16, 16, 3, 110.0);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let c1 = (0.01f64 * 255.0).powi(2);
        let expect = (2.0 * 100.0 * 110.0 + c1) / (100.0f64.powi(2) + 110.0f64.powi(2) + c1);
        assert!((ssim(&a, &b).unwrap() - expect).abs() < 1e-9);
        assert!((expect - 0.9955).abs() < 1e-3);
        assert!(matches!(
            ssim(&constant(10, 30, 1, 0.0), &constant(10, 30, 1, 0.0)),
            Err(Error::TooSmall { .. })
        ));
    }

    #[test]
    fn iou_cases() {
        let a = square(30, 30, 0, 0, 10);
        let b = square(30, 30, 5, 0, 10);
        let (iou, f1) = iou_f1(&a, &b).unwrap();
        assert!((iou - 1.0 / 3.0).abs() < 1e-12);
        assert!((f1 - 0.5).abs() < 1e-12);
        assert_eq!(iou_f1(&a, &a).unwrap(), (1.0, 1.0));
        assert_eq!(iou_f1(&a, &square(30, 30, 20, 20, 5)).unwrap(), (0.0, 0.0));
        let empty = Grid::filled(30, 30, false);
        assert_eq!(iou_f1(&empty, &empty).unwrap(), (1.0, 1.0));
        assert_eq!(iou_f1(&empty, &a).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn points_from_mask() {
        let mut rng = seed::rng(1);
        assert!(mask_to_points(&Grid::filled(5, 5, false), 1024, &mut rng).is_empty());
        let m = Grid::from_fn(20, 20, |x, y| y == 3 && x < 10);
        let pc = mask_to_points(&m, 1024, &mut rng);
        assert_eq!(pc.len(), 10);
        let diag = (800.0f64).sqrt();
        assert_eq!(pc.points[0], (0.5 / diag, 3.5 / diag));
        let big = Grid::filled(50, 50, true);
        let s1 = mask_to_points(&big, 100, &mut seed::rng(9));
        let s2 = mask_to_points(&big, 100, &mut seed::rng(9));
        assert_eq!(s1.len(), 100);
        assert_eq!(s1, s2);
    }

    #[test]
    fn hungarian_small() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = hungarian(&cost, 3);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn emd_cases() {
        let p = PointCloud::new(vec![(0.1, 0.2), (0.5, 0.5), (0.9, 0.1)]);
        assert_eq!(emd(&p, &p), 0.0);
        let a = PointCloud::new(vec![(0.1, 0.1)]);
        let b = PointCloud::new(vec![(0.4, 0.5)]);
        assert!((emd(&a, &b) - 0.5).abs() < 1e-12);
        assert_eq!(emd(&PointCloud::default(), &PointCloud::default()), 0.0);
        assert_eq!(emd(&PointCloud::default(), &a), 1.0);
        // unequal sizes are equalised by subsampling
        let v = emd(&p, &a);
        assert!(v >= 0.0 && v.is_finite());
    }

    #[test]
    fn gt_mask_sweep() {
        let a = constant(12, 12, 3, 50.0);
        let mut b = a.clone();
        b.pixel_mut(4, 7)[1] = 80.0;
        let count = |m: &Mask| m.count() as f64;
        let (m, t) = derive_gt_mask(&a, &b, &[64, 16], count).unwrap();
        assert_eq!(t, 16);
        assert_eq!(m.count(), 1);
        assert!(m.get(4, 7));
        let (m, t) = derive_gt_mask(&a, &a, &[8, 4], count).unwrap();
        assert_eq!((m.count(), t), (0, 4));
        assert!(matches!(
            derive_gt_mask(&a, &b, &[], count),
            Err(Error::EmptyThresholds)
        ));
    }

    #[test]
    fn report_serialises_infinity() {
        let r = MetricsReport {
            psnr_db: Some(f64::INFINITY),
            ssim: Some(1.0),
            ..MetricsReport::default()
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"psnr_db\":\"inf\""), "{s}");
        let back: MetricsReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        let agg = aggregate(&[r.clone(), r]);
        assert_eq!(agg.count, 2);
        assert_eq!(agg.ssim.unwrap().mean, 1.0);
        assert_eq!(agg.ssim.unwrap().std, 0.0);
        serde_json::to_string(&agg).unwrap();
    }

    #[test]
    fn summary_matches_hand_values() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(Summary::of(&[]).is_none());
        assert_eq!(Summary::of(&[7.0]).unwrap().std, 0.0);
        let inf = Summary::of(&[f64::INFINITY; 3]).unwrap();
        assert_eq!((inf.mean, inf.std), (f64::INFINITY, 0.0));
        assert!(Summary::of(&[30.0, f64::INFINITY]).unwrap().std.is_nan());
    }
}
