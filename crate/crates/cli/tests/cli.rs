use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_filmdamage"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_rgb(path: &Path, w: u32, h: u32, f: impl Fn(u32, u32) -> [u8; 3]) {
    image::RgbImage::from_fn(w, h, |x, y| image::Rgb(f(x, y)))
        .save(path)
        .unwrap();
}

/// Bank, statistics and config built from the bundled fixture.
fn workspace() -> TempDir {
    let dir = TempDir::new().unwrap();
    let fx = fixtures();
    let bank = dir.path().join("bank");
    let stats = dir.path().join("stats.json");
    ok(&[
        "ingest",
        "--annotations",
        s(&fx.join("annotations.json")),
        "--scans",
        s(&fx.join("scans")),
        "--synthetic",
        s(&fx.join("synthetic")),
        "--scratches",
        "4",
        "--seed",
        "5",
        "--out",
        s(&bank),
    ]);
    ok(&[
        "stats",
        "--annotations",
        s(&fx.join("annotations.json")),
        "--bank",
        s(&bank),
        "--out",
        s(&stats),
    ]);
    fs::write(
        dir.path().join("config.json"),
        r#"{"stats": "stats.json", "bank": "bank", "resolution": [640, 480], "master_seed": 11}"#,
    )
    .unwrap();
    dir
}

fn tree_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let out = run(&["metrics"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_cleanly() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("dataset"));
}

#[test]
fn metrics_on_unequal_images_fails_at_runtime() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.png");
    let b = dir.path().join("b.png");
    write_rgb(&a, 32, 32, |_, _| [10, 10, 10]);
    write_rgb(&b, 32, 40, |_, _| [10, 10, 10]);
    let out = run(&["metrics", "--images", s(&a), s(&b)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension mismatch"));
}

#[test]
fn metrics_report_for_an_offset_image() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.png");
    let b = dir.path().join("b.png");
    write_rgb(&a, 32, 32, |_, _| [100, 100, 100]);
    write_rgb(&b, 32, 32, |_, _| [116, 116, 116]);
    let out = ok(&["metrics", "--images", s(&a), s(&b), "--seed", "3"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["psnr_db"].as_f64().unwrap() - 24.05).abs() < 0.01);
    assert_eq!(v["master_seed"], 3);
    let same = ok(&["metrics", "--images", s(&a), s(&a)]);
    let v: serde_json::Value = serde_json::from_slice(&same.stdout).unwrap();
    assert_eq!(v["psnr_db"], "inf");
}

#[test]
fn stats_reproduce_fixture_counts() {
    let ws = workspace();
    let doc: serde_json::Value =
        serde_json::from_slice(&fs::read(ws.path().join("stats.json")).unwrap()).unwrap();
    let expected: serde_json::Value =
        serde_json::from_slice(&fs::read(fixtures().join("expected.json")).unwrap()).unwrap();
    for (class, want) in expected["classes"].as_object().unwrap() {
        assert_eq!(doc[class]["total_count"], want["total_count"], "{class}");
    }
}

#[test]
fn overlay_is_byte_identical_across_runs() {
    let ws = workspace();
    let cfg = ws.path().join("config.json");
    let a = ws.path().join("a/overlay.png");
    let b = ws.path().join("b/overlay.png");
    for out in [&a, &b] {
        ok(&[
            "overlay",
            "--config",
            s(&cfg),
            "--seed",
            "42",
            "--width",
            "1024",
            "--height",
            "768",
            "--out",
            s(out),
        ]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(a.with_file_name("overlay.placements.json")).unwrap(),
        fs::read(b.with_file_name("overlay.placements.json")).unwrap()
    );
    let sidecar: serde_json::Value =
        serde_json::from_slice(&fs::read(a.with_file_name("overlay.placements.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["seed"], 42);
}

#[test]
fn dataset_rerun_is_byte_identical_and_damage_composes() {
    let ws = workspace();
    let clean = ws.path().join("clean");
    fs::create_dir_all(&clean).unwrap();
    for i in 0..3u32 {
        write_rgb(
            &clean.join(format!("scan{i}.png")),
            320 + 16 * i,
            288,
            |x, y| [(x * 3 + i) as u8, (y * 5) as u8, ((x + y) / 2) as u8],
        );
    }
    let cfg = ws.path().join("config.json");
    let out = ws.path().join("ds");
    ok(&[
        "dataset",
        "--clean-dir",
        s(&clean),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    let first = tree_bytes(&out);
    ok(&[
        "dataset",
        "--clean-dir",
        s(&clean),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    assert_eq!(first, tree_bytes(&out));

    let manifest = fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 3);
    for line in manifest.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["master_seed"], 11);
    }

    let report = ok(&[
        "metrics",
        "--manifest",
        s(&out.join("manifest.jsonl")),
        "--predicted-masks",
        s(&out.join("masks")),
    ]);
    let v: serde_json::Value = serde_json::from_slice(&report.stdout).unwrap();
    assert_eq!(v["summary"]["count"], 3);
    assert_eq!(v["summary"]["iou"]["mean"], 1.0);
}

#[test]
fn damage_writes_image_and_mask() {
    let ws = workspace();
    let cfg = ws.path().join("config.json");
    let ov = ws.path().join("ov.png");
    ok(&[
        "overlay",
        "--config",
        s(&cfg),
        "--seed",
        "8",
        "--out",
        s(&ov),
    ]);
    let img = ws.path().join("img.png");
    write_rgb(&img, 640, 480, |_, _| [128, 128, 128]);
    let damaged = ws.path().join("damaged.png");
    let mask = ws.path().join("mask.png");
    ok(&[
        "damage",
        "--image",
        s(&img),
        "--overlay",
        s(&ov),
        "--polarity",
        "positive",
        "--mask",
        s(&mask),
        "--out",
        s(&damaged),
    ]);
    let d = image::open(&damaged).unwrap().to_rgb8();
    assert!(d.pixels().all(|p| p.0.iter().all(|&c| c <= 128)));
    assert_eq!(
        image::open(&mask).unwrap().to_luma8().dimensions(),
        (640, 480)
    );
}

#[test]
fn patchify_then_stitch_round_trips() {
    let dir = TempDir::new().unwrap();
    let img = dir.path().join("img.png");
    write_rgb(&img, 300, 200, |x, y| {
        [(x % 251) as u8, (y % 241) as u8, ((x * y) % 233) as u8]
    });
    let patches = dir.path().join("patches");
    ok(&[
        "patchify",
        "--image",
        s(&img),
        "--patch",
        "64",
        "--out",
        s(&patches),
    ]);
    let out = dir.path().join("stitched.png");
    ok(&[
        "stitch",
        "--grid",
        s(&patches.join("grid.json")),
        "--out",
        s(&out),
    ]);
    assert_eq!(
        image::open(&img).unwrap().to_rgb8().into_raw(),
        image::open(&out).unwrap().to_rgb8().into_raw()
    );
}
