//! PNG and JSON file helpers.

use std::fs;
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, RgbImage};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::raster::{Grid, Mask};

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_rgb8(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path).map_err(|e| image_err(path, e))?.to_rgb8())
}

pub fn save_rgb8(path: &Path, img: &RgbImage) -> Result<()> {
    ensure_parent(path)?;
    img.save(path).map_err(|e| image_err(path, e))
}

/// Load any image as luminance in `[0, 255]`.
pub fn load_luma(path: &Path) -> Result<Grid<f32>> {
    let img = image::open(path)
        .map_err(|e| image_err(path, e))?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Grid::from_vec(w, h, img.into_raw().into_iter().map(f32::from).collect())
}

/// Load a stamp image as alpha in `[0, 1]`. An alpha channel wins over
/// luminance when present.
pub fn load_alpha(path: &Path) -> Result<Grid<f32>> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values: Vec<f32> = if img.color().has_alpha() {
        img.to_luma_alpha16()
            .pixels()
            .map(|p| p.0[1] as f32 / 65535.0)
            .collect()
    } else {
        img.to_luma16()
            .pixels()
            .map(|p| p.0[0] as f32 / 65535.0)
            .collect()
    };
    Grid::from_vec(w, h, values)
}

pub fn save_alpha8(path: &Path, alpha: &Grid<f32>) -> Result<()> {
    ensure_parent(path)?;
    let raw = alpha
        .data()
        .iter()
        .map(|&a| (a.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = GrayImage::from_raw(alpha.width() as u32, alpha.height() as u32, raw)
        .ok_or_else(|| Error::invalid("buffer size mismatch"))?;
    img.save(path).map_err(|e| image_err(path, e))
}

pub fn save_alpha16(path: &Path, alpha: &Grid<f32>) -> Result<()> {
    ensure_parent(path)?;
    let raw: Vec<u16> = alpha
        .data()
        .iter()
        .map(|&a| (a.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16)
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(alpha.width() as u32, alpha.height() as u32, raw)
            .ok_or_else(|| Error::invalid("buffer size mismatch"))?;
    img.save(path).map_err(|e| image_err(path, e))
}

pub fn save_mask(path: &Path, mask: &Mask) -> Result<()> {
    ensure_parent(path)?;
    let raw = mask
        .data()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    let img = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, raw)
        .ok_or_else(|| Error::invalid("buffer size mismatch"))?;
    img.save(path).map_err(|e| image_err(path, e))
}

/// Any pixel with luminance of at least half scale is foreground.
pub fn load_mask(path: &Path) -> Result<Mask> {
    let img = image::open(path)
        .map_err(|e| image_err(path, e))?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Grid::from_vec(w, h, img.into_raw().into_iter().map(|v| v >= 128).collect())
}
