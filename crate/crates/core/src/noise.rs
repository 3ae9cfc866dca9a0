//! Seeded fractal Perlin noise and the spatial densities sampled from it.
//!
//! Coordinates are frame-normalised: `(0, 0)` is the top-left corner and
//! `(1, 1)` the bottom-right, whatever the frame's aspect ratio.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive, splitmix64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerlinField {
    pub seed: u64,
    pub octaves: u32,
    /// Lattice cells per frame edge at the first octave.
    pub base_frequency: f64,
    pub persistence: f64,
    pub lacunarity: f64,
}

impl Default for PerlinField {
    fn default() -> Self {
        Self {
            seed: 0,
            octaves: 4,
            base_frequency: 4.0,
            persistence: 0.5,
            lacunarity: 2.0,
        }
    }
}

impl PerlinField {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.octaves == 0 {
            return Err(Error::invalid("octaves must be at least 1"));
        }
        if !(self.persistence > 0.0 && self.persistence <= 1.0) {
            return Err(Error::invalid("persistence must be in (0, 1]"));
        }
        if !(self.lacunarity > 1.0 && self.lacunarity.is_finite()) {
            return Err(Error::invalid("lacunarity must be > 1"));
        }
        if !(self.base_frequency > 0.0 && self.base_frequency.is_finite()) {
            return Err(Error::invalid("base frequency must be positive"));
        }
        Ok(())
    }
}

/// Permutation tables for every octave of a [`PerlinField`].
#[derive(Debug, Clone)]
pub struct PerlinNoise {
    field: PerlinField,
    perms: Vec<[u8; 512]>,
    norm: f64,
}

fn permutation(seed: u64) -> [u8; 512] {
    let mut p = [0u8; 256];
    for (i, v) in p.iter_mut().enumerate() {
        *v = i as u8;
    }
    let mut state = seed;
    for i in (1..256).rev() {
        state = splitmix64(state);
        let j = (state % (i as u64 + 1)) as usize;
        p.swap(i, j);
    }
    let mut out = [0u8; 512];
    out[..256].copy_from_slice(&p);
    out[256..].copy_from_slice(&p);
    out
}

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

#[inline]
fn lerp(t: f64, a: f64, b: f64) -> f64 {
    a + t * (b - a)
}

#[inline]
fn grad(hash: u8, x: f64, y: f64) -> f64 {
    match hash & 3 {
        0 => x + y,
        1 => -x + y,
        2 => x - y,
        _ => -x - y,
    }
}

fn noise2(perm: &[u8; 512], x: f64, y: f64) -> f64 {
    let xf = x.floor();
    let yf = y.floor();
    let xi = (xf as i64 & 255) as usize;
    let yi = (yf as i64 & 255) as usize;
    let x = x - xf;
    let y = y - yf;
    let u = fade(x);
    let v = fade(y);
    let aa = perm[perm[xi] as usize + yi];
    let ab = perm[perm[xi] as usize + yi + 1];
    let ba = perm[perm[xi + 1] as usize + yi];
    let bb = perm[perm[xi + 1] as usize + yi + 1];
    lerp(
        v,
        lerp(u, grad(aa, x, y), grad(ba, x - 1.0, y)),
        lerp(u, grad(ab, x, y - 1.0), grad(bb, x - 1.0, y - 1.0)),
    )
}

impl PerlinNoise {
    pub fn new(field: &PerlinField) -> Result<Self> {
        field.validate()?;
        let perms = (0..field.octaves)
            .map(|o| permutation(derive(field.seed, &[o as u64])))
            .collect();
        let norm = (0..field.octaves)
            .map(|o| field.persistence.powi(o as i32))
            .sum();
        Ok(Self {
            field: *field,
            perms,
            norm,
        })
    }

    /// Octave-summed noise in `[-1, 1]`.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut freq = self.field.base_frequency;
        let mut amp = 1.0;
        let mut acc = 0.0;
        for perm in &self.perms {
            acc += amp * noise2(perm, x * freq, y * freq);
            freq *= self.field.lacunarity;
            amp *= self.field.persistence;
        }
        (acc / self.norm).clamp(-1.0, 1.0)
    }
}

/// Evaluate the fractal noise of `field` at one frame-normalised point.
///
/// Builds the permutation tables on every call; use [`PerlinNoise`] for
/// repeated evaluation.
pub fn perlin(x: f64, y: f64, field: &PerlinField) -> Result<f64> {
    Ok(PerlinNoise::new(field)?.eval(x, y))
}

/// A normalised, non-negative density over a square grid of cells covering
/// the frame. Cells are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    grid_res: usize,
    cells: Vec<f64>,
}

impl DensityGrid {
    /// Normalise non-negative `weights` into a density. All-zero weights
    /// give the uniform density.
    pub fn from_weights(grid_res: usize, weights: Vec<f64>) -> Result<Self> {
        if grid_res == 0 || weights.len() != grid_res * grid_res {
            return Err(Error::invalid(format!(
                "{} weights for a {grid_res}x{grid_res} grid",
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("density weights must be finite and >= 0"));
        }
        let total: f64 = weights.iter().sum();
        let cells = if total > 0.0 {
            weights.into_iter().map(|w| w / total).collect()
        } else {
            vec![1.0 / (grid_res * grid_res) as f64; grid_res * grid_res]
        };
        Ok(Self { grid_res, cells })
    }

    pub fn uniform(grid_res: usize) -> Self {
        let n = grid_res.max(1);
        Self {
            grid_res: n,
            cells: vec![1.0 / (n * n) as f64; n * n],
        }
    }

    pub fn grid_res(&self) -> usize {
        self.grid_res
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.cells[row * self.grid_res + col]
    }

    pub fn sampler(&self) -> PositionSampler {
        let mut acc = 0.0;
        let cdf = self
            .cells
            .iter()
            .map(|&c| {
                acc += c;
                acc
            })
            .collect();
        PositionSampler {
            grid_res: self.grid_res,
            cdf,
        }
    }
}

/// Noise evaluated at cell centres, shifted to a zero minimum and
/// normalised. A constant field yields the uniform density.
pub fn perlin_density(field: &PerlinField, grid_res: usize) -> Result<DensityGrid> {
    if grid_res < 2 {
        return Err(Error::invalid("grid resolution must be at least 2"));
    }
    let noise = PerlinNoise::new(field)?;
    let step = 1.0 / grid_res as f64;
    let values: Vec<f64> = (0..grid_res * grid_res)
        .map(|i| {
            let (col, row) = (i % grid_res, i / grid_res);
            noise.eval((col as f64 + 0.5) * step, (row as f64 + 0.5) * step)
        })
        .collect();
    density_from_values(grid_res, values)
}

pub(crate) fn density_from_values(grid_res: usize, values: Vec<f64>) -> Result<DensityGrid> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    DensityGrid::from_weights(grid_res, values.into_iter().map(|v| v - min).collect())
}

/// Inverse-CDF sampler over a [`DensityGrid`].
#[derive(Debug, Clone)]
pub struct PositionSampler {
    grid_res: usize,
    cdf: Vec<f64>,
}

impl PositionSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let total = *self.cdf.last().expect("grid is never empty");
        let u = rng.random::<f64>() * total;
        let mut idx = self.cdf.partition_point(|&c| c <= u);
        if idx >= self.cdf.len() {
            // u landed on the total through rounding: take the last live cell
            idx = self
                .cdf
                .windows(2)
                .rposition(|w| w[1] > w[0])
                .map_or(0, |i| i + 1);
        }
        let col = idx % self.grid_res;
        let row = idx / self.grid_res;
        let step = 1.0 / self.grid_res as f64;
        let x = (col as f64 + rng.random::<f64>()) * step;
        let y = (row as f64 + rng.random::<f64>()) * step;
        (x.min(1.0 - f64::EPSILON), y.min(1.0 - f64::EPSILON))
    }
}

/// Draw `n` independent frame-normalised positions from `grid`.
pub fn sample_positions<R: Rng + ?Sized>(
    grid: &DensityGrid,
    n: usize,
    rng: &mut R,
) -> Vec<(f64, f64)> {
    let sampler = grid.sampler();
    (0..n).map(|_| sampler.sample(rng)).collect()
}
