mod common;

use std::path::PathBuf;

use filmdamage::dataset::{
    build_dataset_with, image_polarity, image_seed, regenerate_mask, split_train_val, DamageConfig,
    DatasetManifest, ManifestEntry, Split,
};
use filmdamage::{io, GammaParams, Polarity};
use image::RgbImage;
use proptest::prelude::*;

use common::{disc_bank, uniform_stats};

fn entry(i: usize) -> ManifestEntry {
    ManifestEntry {
        clean_path: PathBuf::from(format!("clean/{i}.png")),
        damaged_path: PathBuf::from(format!("damaged/{i}.png")),
        mask_path: PathBuf::from(format!("masks/{i}.png")),
        polarity: Polarity::Negative,
        seed: i as u64,
        split: Split::Train,
        master_seed: 0,
    }
}

fn manifest(n: usize) -> DatasetManifest {
    DatasetManifest {
        entries: (0..n).map(entry).collect(),
    }
}

#[test]
fn polarity_is_a_fair_coin() {
    let negatives = (0..1000)
        .filter(|&i| image_polarity(image_seed(2024, i), 0.5) == Polarity::Negative)
        .count();
    assert!((450..=550).contains(&negatives), "{negatives}");
    assert!((0..50).all(|i| image_polarity(image_seed(1, i), 1.0) == Polarity::Negative));
    assert!((0..50).all(|i| image_polarity(image_seed(1, i), 0.0) == Polarity::Positive));
}

#[test]
fn split_sizes() {
    let m = split_train_val(&manifest(6228), 0.9, 3).unwrap();
    let train = m.entries.iter().filter(|e| e.split == Split::Train).count();
    assert_eq!((train, m.len() - train), (5605, 623));
    assert_eq!(split_train_val(&manifest(6228), 0.9, 3).unwrap(), m);
    for (a, b) in m.entries.iter().zip(manifest(6228).entries) {
        assert_eq!(a.seed, b.seed);
    }
    assert!(split_train_val(&manifest(3), 0.0, 3).is_err());
    assert!(split_train_val(&manifest(3), 1.5, 3).is_err());
}

#[test]
fn empty_input_gives_an_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = DamageConfig::new("stats.json".into(), "bank".into());
    let stats = uniform_stats(4.0, 1.0, GammaParams::new(4.0, 1e4).unwrap());
    let m = build_dataset_with(&[], &config, &stats, &disc_bank(), dir.path()).unwrap();
    assert!(m.is_empty());
    assert_eq!(
        std::fs::read_to_string(dir.path().join("manifest.jsonl")).unwrap(),
        ""
    );
}

#[test]
fn small_and_unreadable_images_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean");
    std::fs::create_dir_all(&clean).unwrap();
    let ok = clean.join("ok.png");
    let small = clean.join("small.png");
    let broken = clean.join("broken.png");
    io::save_rgb8(
        &ok,
        &RgbImage::from_pixel(300, 256, image::Rgb([120, 90, 60])),
    )
    .unwrap();
    io::save_rgb8(
        &small,
        &RgbImage::from_pixel(300, 255, image::Rgb([0, 0, 0])),
    )
    .unwrap();
    std::fs::write(&broken, b"not a png").unwrap();

    let mut config = DamageConfig::new("stats.json".into(), "bank".into());
    config.master_seed = 99;
    let stats = uniform_stats(8.0, 3.0 / 8.0, GammaParams::new(6.0, 2e6).unwrap());
    let bank = disc_bank();
    let out = dir.path().join("out");
    let m = build_dataset_with(&[small, ok.clone(), broken], &config, &stats, &bank, &out).unwrap();
    assert_eq!(m.len(), 1);
    let e = &m.entries[0];
    assert_eq!(e.clean_path, ok);
    assert_eq!(e.seed, image_seed(99, 1));
    assert_eq!(e.polarity, image_polarity(e.seed, 0.5));

    let saved = io::load_mask(&e.mask_path).unwrap();
    assert_eq!(
        regenerate_mask(e, 300, 256, &config, &stats, &bank).unwrap(),
        saved
    );
    let text = std::fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    assert_eq!(DatasetManifest::from_jsonl(&text).unwrap(), m);
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn split_is_floor_of_ratio(n in 0usize..3000, ratio in 0.01f64..=1.0, s in any::<u64>()) {
        let m = split_train_val(&manifest(n), ratio, s).unwrap();
        let train = m.entries.iter().filter(|e| e.split == Split::Train).count();
        let want = (ratio * n as f64 + 1e-9).floor() as usize;
        prop_assert_eq!(train, want);
    }
}
