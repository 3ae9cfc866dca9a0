//! Synthetic analogue film damage.
//!
//! The crate turns a bank of annotated real artefacts (dust, dirt, hairs and
//! scratches) into a statistical model of film damage and samples new
//! full-frame damage overlays from it. Around the generator sit the pieces
//! needed to use those overlays in practice: dataset building, patch-wise
//! processing of high resolution scans, and restoration metrics.
//!
//! Modules, bottom-up:
//!
//! - [`bank`]: annotation parsing, physical units, sprite extraction and scaling
//! - [`stats`]: per-patch counts, Gamma maximum-likelihood fits, centroid KDE
//! - [`noise`]: seeded fractal Perlin noise and the spatial densities built on it
//! - [`overlay`]: the sampling and compositing of damage overlays
//! - [`dataset`]: damaged/clean/mask triplets with a JSON Lines manifest
//! - [`patchwork`]: overlapping tiling and partition-of-unity stitching
//! - [`metrics`]: PSNR, SSIM, IoU/F1, point-cloud EMD, ground-truth masks
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.
//! Every parallel stage reduces in index order, so outputs are identical
//! with and without the feature.

// `!(x > 0.0)` guards are deliberate: they reject NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bank;
pub mod dataset;
pub mod error;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod overlay;
pub mod par;
pub mod patchwork;
pub mod raster;
pub mod seed;
pub mod special;
pub mod stats;

pub use bank::{
    area_px2_to_um2, extract_sprite, parse_annotations, polygon_area_px2, rescale_sprite,
    synth_scratch, ArtefactBank, ArtefactClass, ArtefactSprite, FrameGeometry, PolygonAnnotation,
    Provenance, ScratchConfig,
};
pub use error::{Error, Result};
pub use metrics::{emd, iou_f1, psnr, ssim, MetricsReport, PointCloud};
pub use noise::{perlin, perlin_density, sample_positions, DensityGrid, PerlinField};
pub use overlay::{
    apply_overlay, generate_overlay, overlay_to_mask, DamageOverlay, OverlayOptions, Placement,
    Polarity,
};
pub use patchwork::{blend_window, plan_grid, stitch, BlendWindow, PatchGrid};
pub use raster::{FloatImage, Grid, Mask};
pub use stats::{fit_gamma_mle, ClassStatistics, GammaParams, StatisticsDoc};
