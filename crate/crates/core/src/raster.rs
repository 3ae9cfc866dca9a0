//! Plain row-major rasters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// A binary segmentation mask.
pub type Mask = Grid<bool>;

impl<T: Copy> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "{} values cannot fill a {width}x{height} grid",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn ensure_same_dims<U: Copy>(&self, other: &Grid<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                left: self.dims(),
                right: other.dims(),
            });
        }
        Ok(())
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }
}

impl Grid<f32> {
    /// Bilinear sample at continuous coordinates where pixel `(i, j)` has its
    /// centre at `(i + 0.5, j + 0.5)`. Samples outside the grid read as 0.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> f32 {
        let fx = u - 0.5;
        let fy = v - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = (fx - x0) as f32;
        let ty = (fy - y0) as f32;
        let x0 = x0 as i64;
        let y0 = y0 as i64;
        let at = |x: i64, y: i64| -> f32 {
            if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
                0.0
            } else {
                self.data[y as usize * self.width + x as usize]
            }
        };
        let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
        let bottom = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }

    /// Area-averaging reduction to `new_w` x `new_h` (each at most the
    /// current size). Every source pixel contributes in proportion to its
    /// overlap with the destination pixel.
    pub fn downsample_area(&self, new_w: usize, new_h: usize) -> Grid<f32> {
        let new_w = new_w.clamp(1, self.width.max(1));
        let new_h = new_h.clamp(1, self.height.max(1));
        let sx = self.width as f64 / new_w as f64;
        let sy = self.height as f64 / new_h as f64;
        let spans = |n: usize, s: f64, limit: usize| -> Vec<Vec<(usize, f64)>> {
            (0..n)
                .map(|i| {
                    let a = i as f64 * s;
                    let b = (a + s).min(limit as f64);
                    let mut out = Vec::new();
                    let mut k = a.floor() as usize;
                    while (k as f64) < b && k < limit {
                        let lo = a.max(k as f64);
                        let hi = b.min(k as f64 + 1.0);
                        if hi > lo {
                            out.push((k, hi - lo));
                        }
                        k += 1;
                    }
                    out
                })
                .collect()
        };
        let xs = spans(new_w, sx, self.width);
        let ys = spans(new_h, sy, self.height);
        let norm = 1.0 / (sx * sy);
        Grid::from_fn(new_w, new_h, |x, y| {
            let mut acc = 0.0f64;
            for &(j, wy) in &ys[y] {
                let row = &self.data[j * self.width..(j + 1) * self.width];
                for &(i, wx) in &xs[x] {
                    acc += row[i] as f64 * wx * wy;
                }
            }
            (acc * norm) as f32
        })
    }
}

/// Interleaved multi-channel floating point image.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "{} values cannot fill a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            channels: 3,
            data: img.as_raw().iter().map(|&v| v as f32).collect(),
        }
    }

    /// Round and clamp into an 8-bit RGB image. Requires 3 channels.
    pub fn to_rgb8(&self) -> Result<image::RgbImage> {
        if self.channels != 3 {
            return Err(Error::invalid(format!(
                "expected 3 channels, image has {}",
                self.channels
            )));
        }
        let raw = self
            .data
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .ok_or_else(|| Error::invalid("buffer size mismatch"))
    }
}
