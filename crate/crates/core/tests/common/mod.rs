#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use filmdamage::bank::{load_annotations, load_synthetic_dir};
use filmdamage::stats::{ClassModel, CountGamma};
use filmdamage::{
    io, ArtefactBank, ArtefactClass, ArtefactSprite, ClassStatistics, FrameGeometry, GammaParams,
    Grid, PointCloud, PolygonAnnotation, Provenance,
};
use serde_json::Value;

pub fn fixtures() -> PathBuf {
    // resolves from any sibling crate, so the validation suite shares the fixtures
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

pub fn expected() -> Value {
    let text = std::fs::read_to_string(fixtures().join("expected.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn geometry() -> FrameGeometry {
    let e = expected();
    FrameGeometry::new(
        e["geometry"]["width_px"].as_u64().unwrap() as usize,
        e["geometry"]["height_px"].as_u64().unwrap() as usize,
    )
    .unwrap()
}

pub fn annotations() -> Vec<PolygonAnnotation> {
    load_annotations(&fixtures().join("annotations.json")).unwrap()
}

pub fn fixture_stats() -> ClassStatistics {
    ClassStatistics::from_annotations(&annotations(), &geometry(), 256).unwrap()
}

/// Sprites cut from the fixture scans plus the drawn sprites.
pub fn fixture_bank() -> ArtefactBank {
    let anns = annotations();
    let geom = geometry();
    let mut scans = HashMap::new();
    for a in &anns {
        if !scans.contains_key(&a.frame_id) {
            let scan = io::load_luma(&fixtures().join("scans").join(format!("{}.png", a.frame_id)))
                .unwrap();
            scans.insert(a.frame_id.clone(), scan);
        }
    }
    let bank = ArtefactBank::from_scans(&anns, &scans, geom).unwrap();
    bank.extended(load_synthetic_dir(&fixtures().join("synthetic"), geom.microns_per_px()).unwrap())
}

pub fn disc(side: usize, radius: f64, class: ArtefactClass) -> ArtefactSprite {
    let c = side as f64 / 2.0;
    let alpha = Grid::from_fn(side, side, |x, y| {
        let d = (x as f64 + 0.5 - c).hypot(y as f64 + 0.5 - c);
        (radius + 0.5 - d).clamp(0.0, 1.0) as f32
    });
    ArtefactSprite::from_alpha(alpha, class, Provenance::SyntheticDrawn, 7.0)
}

/// A bank with a few disc sprites per class.
pub fn disc_bank() -> ArtefactBank {
    let sprites = ArtefactClass::ALL
        .iter()
        .flat_map(|&c| [6usize, 10, 16].map(|s| disc(s, s as f64 / 2.0 - 1.0, c)));
    ArtefactBank::new(FrameGeometry::new(4944, 3396).unwrap(), sprites)
}

/// Identical count and area models for every class.
pub fn uniform_stats(count_k: f64, count_theta: f64, area: GammaParams) -> ClassStatistics {
    let model = ClassModel {
        count_gamma: Some(CountGamma {
            k: count_k,
            theta: count_theta,
            epsilon: 0.5,
        }),
        area_gamma_um2: Some(area),
        total_count: 0,
        mean_area_um2: None,
        std_area_um2: None,
    };
    ClassStatistics::new(
        ArtefactClass::ALL
            .iter()
            .map(|&c| (c, model.clone()))
            .collect(),
    )
    .unwrap()
}

/// Minimum over all permutations, summed in row order.
pub fn brute_force_emd(p: &PointCloud, q: &PointCloud) -> f64 {
    fn go(
        i: usize,
        used: &mut [bool],
        acc: f64,
        p: &[(f64, f64)],
        q: &[(f64, f64)],
        best: &mut f64,
    ) {
        if i == p.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..q.len() {
            if !used[j] {
                used[j] = true;
                let d = (p[i].0 - q[j].0).hypot(p[i].1 - q[j].1);
                go(i + 1, used, acc + d, p, q, best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(
        0,
        &mut vec![false; q.len()],
        0.0,
        &p.points,
        &q.points,
        &mut best,
    );
    best / p.len() as f64
}

/// Relative difference `|a − b| / |b|`.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
