mod common;

use filmdamage::metrics::{emd_with_budget, mask_to_points};
use filmdamage::{emd, iou_f1, psnr, seed, ssim, FloatImage, Grid, Mask, PointCloud};
use proptest::prelude::*;
use rand::Rng;

use common::brute_force_emd;

fn cloud<R: Rng>(n: usize, rng: &mut R) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
            .collect(),
    )
}

#[test]
fn emd_matches_exhaustive_search() {
    let mut rng = seed::rng(404);
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let p = cloud(n, &mut rng);
        let q = cloud(n, &mut rng);
        assert_eq!(emd(&p, &q), brute_force_emd(&p, &q));
    }
}

#[test]
fn emd_is_a_metric_on_equal_sized_clouds() {
    let mut rng = seed::rng(77);
    for _ in 0..1000 {
        let n = rng.random_range(1..=7);
        let (a, b, c) = (cloud(n, &mut rng), cloud(n, &mut rng), cloud(n, &mut rng));
        assert_eq!(emd(&a, &a), 0.0);
        assert!((emd(&a, &b) - emd(&b, &a)).abs() < 1e-12);
        assert!(emd(&a, &c) <= emd(&a, &b) + emd(&b, &c) + 1e-12);
    }
}

#[test]
fn emd_empty_conventions() {
    let empty = PointCloud::new(Vec::new());
    let one = PointCloud::new(vec![(0.5, 0.5)]);
    assert_eq!(emd(&empty, &empty), 0.0);
    assert_eq!(emd(&empty, &one), 1.0);
    assert_eq!(emd(&one, &empty), 1.0);
}

#[test]
fn emd_is_deterministic_under_subsampling() {
    let mut rng = seed::rng(5);
    let p = cloud(700, &mut rng);
    let q = cloud(40, &mut rng);
    let a = emd_with_budget(&p, &q, 32);
    assert_eq!(a, emd_with_budget(&p, &q, 32));
    assert!(a > 0.0 && a < 1.0);
}

#[test]
fn mask_points_are_normalised_pixel_centres() {
    let mut mask = Grid::filled(30, 40, false);
    mask.set(0, 0, true);
    mask.set(29, 39, true);
    let pts = mask_to_points(&mask, 1024, &mut seed::rng(1));
    let diag = (30.0f64).hypot(40.0);
    assert_eq!(
        pts.points,
        vec![(0.5 / diag, 0.5 / diag), (29.5 / diag, 39.5 / diag)]
    );
    let full = Grid::filled(64, 64, true);
    assert_eq!(mask_to_points(&full, 100, &mut seed::rng(1)).len(), 100);
}

fn image_from<R: Rng>(w: usize, h: usize, channels: usize, rng: &mut R) -> FloatImage {
    let data = (0..w * h * channels)
        .map(|_| rng.random_range(0.0f32..255.0).round())
        .collect();
    FloatImage::from_vec(w, h, channels, data).unwrap()
}

#[test]
fn ssim_symmetry_and_inversion() {
    let mut rng = seed::rng(31);
    for _ in 0..10 {
        let a = image_from(48, 40, 3, &mut rng);
        let b = image_from(48, 40, 3, &mut rng);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        let inv =
            FloatImage::from_vec(48, 40, 3, a.data.iter().map(|v| 255.0 - v).collect()).unwrap();
        assert!(ssim(&a, &inv).unwrap() < 0.5);
    }
    let tiny = FloatImage::zeros(10, 40, 3);
    assert!(ssim(&tiny, &tiny).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn emd_of_a_translation_is_its_length(s in any::<u64>(), n in 1usize..40, dx in -0.3f64..0.3, dy in -0.3f64..0.3) {
        let p = cloud(n, &mut seed::rng(s));
        let d = emd(&p, &p.translated(dx, dy));
        prop_assert!((d - dx.hypot(dy)).abs() < 1e-9);
    }

    #[test]
    fn f1_is_a_function_of_iou(a in proptest::collection::vec(any::<bool>(), 96), b in proptest::collection::vec(any::<bool>(), 96)) {
        let a: Mask = Grid::from_vec(12, 8, a).unwrap();
        let b: Mask = Grid::from_vec(12, 8, b).unwrap();
        let (iou, f1) = iou_f1(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&iou));
        prop_assert!((f1 - 2.0 * iou / (1.0 + iou)).abs() < 1e-12);
        prop_assert_eq!(iou_f1(&b, &a).unwrap(), (iou, f1));
    }

    #[test]
    fn psnr_symmetry_and_constant_shift(s in any::<u64>(), c in 1u8..60) {
        let mut rng = seed::rng(s);
        let a = image_from(16, 12, 3, &mut rng);
        let b = image_from(16, 12, 3, &mut rng);
        prop_assert_eq!(psnr(&a, &b, 255.0).unwrap(), psnr(&b, &a, 255.0).unwrap());
        let shifted = FloatImage::from_vec(16, 12, 3, a.data.iter().map(|v| v + c as f32).collect()).unwrap();
        let want = 20.0 * (255.0 / c as f64).log10();
        prop_assert!((psnr(&a, &shifted, 255.0).unwrap() - want).abs() < 1e-9);
        prop_assert_eq!(psnr(&a, &a, 255.0).unwrap(), f64::INFINITY);
    }
}
