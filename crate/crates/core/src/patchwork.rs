//! Overlapping patch tiling and smooth stitching of large images.
//!
//! Patches sit on a regular stride (half the patch for 50% overlap); the
//! last row and column are pulled back so patches stay inside the image.
//! Each patch is weighted by a separable raised-cosine window whose taper
//! is flattened on sides that touch the image border. Half-overlapping
//! windows already sum to one; where a clamped patch overlaps more, the
//! weights along that axis are renormalised so every pixel still sums to
//! one.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::raster::{FloatImage, Grid, Mask};

pub type Origin = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub width: usize,
    pub height: usize,
    pub patch_px: usize,
    pub stride_px: usize,
    /// Row-major: all origins of the first patch row, then the next row.
    pub origins: Vec<Origin>,
}

fn axis_origins(dim: usize, patch: usize, stride: usize) -> Vec<usize> {
    if dim <= patch {
        return vec![0];
    }
    let mut out = Vec::new();
    let mut o = 0;
    while o + patch < dim {
        out.push(o);
        o += stride;
    }
    out.push(dim - patch);
    out.dedup();
    out
}

/// Lay out `patch_px` patches with the given fractional overlap.
pub fn plan_grid(width: usize, height: usize, patch_px: usize, overlap: f64) -> Result<PatchGrid> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("image dimensions must be positive"));
    }
    if patch_px == 0 {
        return Err(Error::invalid("patch size must be positive"));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid(format!(
            "overlap must be in [0, 1), got {overlap}"
        )));
    }
    let stride_px = ((patch_px as f64 * (1.0 - overlap)).round() as usize).max(1);
    let xs = axis_origins(width, patch_px, stride_px);
    let ys = axis_origins(height, patch_px, stride_px);
    let origins = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();
    Ok(PatchGrid {
        width,
        height,
        patch_px,
        stride_px,
        origins,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeFlags {
    pub left: bool,
    pub right: bool,
    pub top: bool,
    pub bottom: bool,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn edge_flags(&self, (x, y): Origin) -> EdgeFlags {
        EdgeFlags {
            left: x == 0,
            right: x + self.patch_px >= self.width,
            top: y == 0,
            bottom: y + self.patch_px >= self.height,
        }
    }

    /// The blend window actually applied to patch `index`.
    pub fn window(&self, index: usize) -> Result<BlendWindow> {
        let o = *self.origins.get(index).ok_or_else(|| {
            Error::invalid(format!("no patch {index} in a grid of {}", self.len()))
        })?;
        let w = Windows::new(self);
        let (wx, wy) = (w.xs.of(o.0), w.ys.of(o.1));
        Ok(BlendWindow {
            patch_px: self.patch_px,
            flags: self.edge_flags(o),
            weights: wy
                .iter()
                .flat_map(|&b| wx.iter().map(move |&a| a * b))
                .collect(),
        })
    }

    /// Sum of the applied window weights of all patches covering each pixel.
    pub fn weight_sums(&self) -> Grid<f64> {
        let windows = Windows::new(self);
        let mut sums = Grid::filled(self.width, self.height, 0.0f64);
        let (w, p) = (self.width, self.patch_px);
        par::for_each_row(sums.data_mut(), w, |y, row| {
            for &(ox, oy) in &self.origins {
                if y < oy || y >= oy + p {
                    continue;
                }
                let wx = windows.xs.of(ox);
                let wy = windows.ys.of(oy)[y - oy];
                for (px, acc) in row[ox..(ox + p).min(w)].iter_mut().enumerate() {
                    *acc += wx[px] * wy;
                }
            }
        });
        sums
    }

    fn check_dims(&self, dims: (usize, usize)) -> Result<()> {
        if dims != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                left: dims,
                right: (self.width, self.height),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendWindow {
    pub patch_px: usize,
    pub flags: EdgeFlags,
    /// Row-major `patch_px`² weights.
    pub weights: Vec<f64>,
}

impl BlendWindow {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.patch_px + x]
    }
}

fn profile(n: usize, flat_start: bool, flat_end: bool) -> Vec<f64> {
    (0..n)
        .map(|t| {
            let first_half = t < n / 2;
            if (first_half && flat_start) || (!first_half && flat_end) {
                1.0
            } else {
                (PI * (t as f64 + 0.5) / n as f64).sin().powi(2)
            }
        })
        .collect()
}

/// Separable `sin²` window, which sums to one under half-patch overlap.
/// Flagged sides keep weight 1 from the border to the patch centre.
pub fn blend_window(patch_px: usize, flags: EdgeFlags) -> Result<BlendWindow> {
    if patch_px == 0 || !patch_px.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "patch size must be even, got {patch_px}"
        )));
    }
    let px = profile(patch_px, flags.left, flags.right);
    let py = profile(patch_px, flags.top, flags.bottom);
    let weights = py
        .iter()
        .flat_map(|&wy| px.iter().map(move |&wx| wx * wy))
        .collect();
    Ok(BlendWindow {
        patch_px,
        flags,
        weights,
    })
}

/// Blending weights along one axis: a `sin²` profile per origin (flat
/// towards the image border), divided by the sum of all profiles covering
/// each position. On a regular half-overlap grid that sum is already one;
/// clamped final origins overlap more and get renormalised.
struct AxisWeights {
    origins: Vec<usize>,
    weights: Vec<Vec<f64>>,
}

impl AxisWeights {
    fn new(dim: usize, mut origins: Vec<usize>, p: usize) -> Self {
        origins.sort_unstable();
        origins.dedup();
        let raw: Vec<Vec<f64>> = origins
            .iter()
            .map(|&o| profile(p, o == 0, o + p >= dim))
            .collect();
        let mut sums = vec![0.0f64; dim];
        for (&o, r) in origins.iter().zip(&raw) {
            for (t, v) in r.iter().enumerate().take(dim - o) {
                sums[o + t] += v;
            }
        }
        let weights = origins
            .iter()
            .zip(raw)
            .map(|(&o, r)| {
                r.into_iter()
                    .enumerate()
                    .map(|(t, v)| if o + t < dim { v / sums[o + t] } else { 0.0 })
                    .collect()
            })
            .collect();
        Self { origins, weights }
    }

    fn of(&self, origin: usize) -> &[f64] {
        let i = self
            .origins
            .binary_search(&origin)
            .expect("origin belongs to the grid");
        &self.weights[i]
    }
}

struct Windows {
    xs: AxisWeights,
    ys: AxisWeights,
}

impl Windows {
    fn new(grid: &PatchGrid) -> Self {
        let p = grid.patch_px;
        Self {
            xs: AxisWeights::new(grid.width, grid.origins.iter().map(|o| o.0).collect(), p),
            ys: AxisWeights::new(grid.height, grid.origins.iter().map(|o| o.1).collect(), p),
        }
    }
}

/// Cut `image` into the grid's patches, zero-padding past the border.
pub fn extract_patches(image: &FloatImage, grid: &PatchGrid) -> Result<Vec<FloatImage>> {
    grid.check_dims(image.dims())?;
    let p = grid.patch_px;
    let c = image.channels;
    Ok(par::map(&grid.origins, |&(ox, oy)| {
        let mut patch = FloatImage::zeros(p, p, c);
        for y in 0..p.min(image.height - oy) {
            let src = ((oy + y) * image.width + ox) * c;
            let n = p.min(image.width - ox) * c;
            patch.data[y * p * c..y * p * c + n].copy_from_slice(&image.data[src..src + n]);
        }
        patch
    }))
}

/// Blend patches back into a full image.
///
/// Every grid origin needs exactly one patch of `patch_px`² with a common
/// channel count.
pub fn stitch(patches: &[(Origin, FloatImage)], grid: &PatchGrid) -> Result<FloatImage> {
    let p = grid.patch_px;
    let by_origin: HashMap<Origin, &FloatImage> =
        patches.iter().map(|(o, img)| (*o, img)).collect();
    let mut ordered = Vec::with_capacity(grid.len());
    for &o in &grid.origins {
        let img = by_origin.get(&o).ok_or(Error::MissingPatch(o))?;
        if img.dims() != (p, p) {
            return Err(Error::DimensionMismatch {
                left: img.dims(),
                right: (p, p),
            });
        }
        ordered.push((o, *img));
    }
    let channels = ordered.first().map_or(1, |(_, img)| img.channels);
    if let Some((_, bad)) = ordered.iter().find(|(_, img)| img.channels != channels) {
        return Err(Error::invalid(format!(
            "patches mix {} and {} channels",
            channels, bad.channels
        )));
    }
    let windows = Windows::new(grid);
    let (w, c) = (grid.width, channels);
    let mut out = FloatImage::zeros(grid.width, grid.height, c);
    par::for_each_row(&mut out.data, w * c, |y, row| {
        let mut acc = vec![0.0f64; w * c];
        for &((ox, oy), img) in &ordered {
            if y < oy || y >= oy + p {
                continue;
            }
            let wx = windows.xs.of(ox);
            let py = y - oy;
            let wy = windows.ys.of(oy)[py];
            for px in 0..p.min(w - ox) {
                let wt = wx[px] * wy;
                let src = img.pixel(px, py);
                for ch in 0..c {
                    acc[(ox + px) * c + ch] += wt * src[ch] as f64;
                }
            }
        }
        for (o, a) in row.iter_mut().zip(acc) {
            *o = a as f32;
        }
    });
    Ok(out)
}

/// Indices of patches whose in-image footprint holds any foreground pixel.
pub fn dirty_patch_indices(grid: &PatchGrid, mask: &Mask) -> Result<Vec<usize>> {
    grid.check_dims(mask.dims())?;
    let p = grid.patch_px;
    let flags = par::map(&grid.origins, |&(ox, oy)| {
        (oy..(oy + p).min(grid.height))
            .any(|y| (ox..(ox + p).min(grid.width)).any(|x| mask.get(x, y)))
    });
    Ok(flags
        .into_iter()
        .enumerate()
        .filter_map(|(i, d)| d.then_some(i))
        .collect())
}

/// Run `process` on the patches flagged by `mask` (all patches without a
/// mask), pass the others through unchanged, and stitch the result.
pub fn process_patches<F>(
    image: &FloatImage,
    grid: &PatchGrid,
    mask: Option<&Mask>,
    process: F,
) -> Result<FloatImage>
where
    F: Fn(&FloatImage) -> FloatImage + Sync + Send,
{
    let patches = extract_patches(image, grid)?;
    let dirty: Vec<bool> = match mask {
        Some(m) => {
            let mut flags = vec![false; grid.len()];
            for i in dirty_patch_indices(grid, m)? {
                flags[i] = true;
            }
            flags
        }
        None => vec![true; grid.len()],
    };
    let processed = par::map_indexed(grid.len(), |i| {
        let patch = if dirty[i] {
            process(&patches[i])
        } else {
            patches[i].clone()
        };
        (grid.origins[i], patch)
    });
    stitch(&processed, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xs(g: &PatchGrid) -> Vec<usize> {
        let mut v: Vec<usize> = g.origins.iter().map(|o| o.0).collect();
        v.sort();
        v.dedup();
        v
    }

    #[test]
    fn grid_layouts() {
        let g = plan_grid(256, 256, 256, 0.5).unwrap();
        assert_eq!(g.origins, vec![(0, 0)]);
        let g = plan_grid(512, 512, 256, 0.5).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(xs(&g), vec![0, 128, 256]);
        let g = plan_grid(300, 256, 256, 0.5).unwrap();
        assert_eq!(g.origins, vec![(0, 0), (44, 0)]);
        let g = plan_grid(100, 40, 256, 0.5).unwrap();
        assert_eq!(g.origins, vec![(0, 0)]);
        assert!(plan_grid(0, 10, 256, 0.5).is_err());
        assert!(plan_grid(10, 10, 256, 1.0).is_err());
    }

    #[test]
    fn window_shape() {
        assert!(blend_window(255, EdgeFlags::default()).is_err());
        let w = blend_window(16, EdgeFlags::default()).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                assert!((w.get(x, y) - w.get(15 - x, y)).abs() < 1e-15);
                assert!((w.get(x, y) - w.get(x, 15 - y)).abs() < 1e-15);
            }
        }
        let corner = blend_window(
            16,
            EdgeFlags {
                left: true,
                top: true,
                ..EdgeFlags::default()
            },
        )
        .unwrap();
        assert_eq!(corner.get(0, 0), 1.0);
    }

    #[test]
    fn interior_weights_sum_to_one() {
        let g = plan_grid(512, 512, 256, 0.5).unwrap();
        let s = g.weight_sums();
        // pixel (200, 200) is covered by the four patches at 0 and 128
        assert!((s.get(200, 200) - 1.0).abs() < 1e-9);
        assert!(s.data().iter().all(|&v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn clamped_grids_still_sum_to_one() {
        for (w, h) in [(300, 256), (1000, 700), (257, 511), (100, 40)] {
            let g = plan_grid(w, h, 256, 0.5).unwrap();
            let s = g.weight_sums();
            let worst = s.data().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-9, "{w}x{h}: {worst}");
        }
    }

    #[test]
    fn regular_grid_uses_the_plain_window() {
        let g = plan_grid(512, 512, 256, 0.5).unwrap();
        for (i, &o) in g.origins.iter().enumerate() {
            let applied = g.window(i).unwrap();
            let plain = blend_window(256, g.edge_flags(o)).unwrap();
            let d = applied
                .weights
                .iter()
                .zip(&plain.weights)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(d < 1e-12, "patch {i}: {d}");
        }
        assert!(g.window(9).is_err());
    }

    #[test]
    fn split_and_stitch_round_trip() {
        let img = FloatImage::from_vec(
            300,
            270,
            2,
            (0..300 * 270 * 2)
                .map(|i| ((i * 37) % 101) as f32 / 7.0)
                .collect(),
        )
        .unwrap();
        let g = plan_grid(300, 270, 64, 0.5).unwrap();
        let patches = extract_patches(&img, &g).unwrap();
        let pairs: Vec<_> = g.origins.iter().copied().zip(patches).collect();
        let back = stitch(&pairs, &g).unwrap();
        let err = img
            .data
            .iter()
            .zip(&back.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(err <= 1e-5, "{err}");
    }

    #[test]
    fn single_patch_is_identity() {
        let img = FloatImage::from_vec(30, 20, 1, (0..600).map(|i| i as f32).collect()).unwrap();
        let g = plan_grid(30, 20, 32, 0.5).unwrap();
        let patches = extract_patches(&img, &g).unwrap();
        assert_eq!(patches[0].dims(), (32, 32));
        let back = stitch(&[((0, 0), patches[0].clone())], &g).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn missing_patch_is_an_error() {
        let g = plan_grid(512, 256, 256, 0.5).unwrap();
        let patch = FloatImage::zeros(256, 256, 1);
        let r = stitch(&[((0, 0), patch.clone()), ((128, 0), patch)], &g);
        assert!(matches!(r, Err(Error::MissingPatch((256, 0)))));
    }

    #[test]
    fn dirty_patches() {
        let g = plan_grid(512, 512, 256, 0.5).unwrap();
        let mut mask = Grid::filled(512, 512, false);
        assert!(dirty_patch_indices(&g, &mask).unwrap().is_empty());
        mask.set(200, 200, true);
        let d = dirty_patch_indices(&g, &mask).unwrap();
        let expect: Vec<usize> = g
            .origins
            .iter()
            .enumerate()
            .filter(|(_, &(x, y))| (x..x + 256).contains(&200) && (y..y + 256).contains(&200))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(d, expect);
        assert_eq!(d.len(), 4);
        let full = Grid::filled(512, 512, true);
        assert_eq!(dirty_patch_indices(&g, &full).unwrap().len(), 9);
        assert!(dirty_patch_indices(&g, &Grid::filled(10, 10, true)).is_err());
    }

    #[test]
    fn identity_processing_with_mask_reconstructs() {
        let img = FloatImage::from_vec(
            200,
            150,
            3,
            (0..200 * 150 * 3).map(|i| (i % 255) as f32).collect(),
        )
        .unwrap();
        let g = plan_grid(200, 150, 64, 0.5).unwrap();
        let mut mask = Grid::filled(200, 150, false);
        mask.set(10, 140, true);
        let out = process_patches(&img, &g, Some(&mask), |p| p.clone()).unwrap();
        for (a, b) in img.data.iter().zip(&out.data) {
            assert!((a - b).abs() <= 1e-4);
        }
    }
}
