use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use speclight_core::io::{self, write_mask_png};
use speclight_core::SpecularMask;

fn speclight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speclight"))
        .args(args)
        .env_remove("SPECLIGHT_WORKERS")
        .output()
        .expect("spawn speclight")
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn synth(root: &Path, seed: u64, cameras: u32, size: u32) -> PathBuf {
    let out = root.join(format!("scene_{seed}_{cameras}_{size}"));
    let o = speclight(&[
        "synth",
        "--seed",
        &seed.to_string(),
        "--cameras",
        &cameras.to_string(),
        "--size",
        &size.to_string(),
        "--out",
        &s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn provenance(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("provenance.json")).unwrap()).unwrap()
}

fn surviving(p: &serde_json::Value) -> usize {
    p["views"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["surviving"].as_array().unwrap().len())
        .sum()
}

#[test]
fn synth_writes_four_views() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), 1, 4, 32);
    let m = io::load_scene(&scene).unwrap();
    assert_eq!(m.views.len(), 4);
}

#[test]
fn unwritable_output_is_an_environment_error() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("plain_file");
    fs::write(&file, "x").unwrap();
    let o = speclight(&["synth", "--out", &s(&file.join("scene"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn detect_writes_masks_and_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), 2, 4, 48);
    let det = tmp.path().join("det");
    let o = speclight(&["detect", "--scene", &s(&scene), "--out", &s(&det)]);
    assert_eq!(o.status.code(), Some(0));
    for id in ["000", "001", "002", "003"] {
        assert!(det.join(format!("Mask_{id}.png")).is_file());
        assert!(det.join(format!("SingleView_{id}.png")).is_file());
    }
    let p = provenance(&det);
    assert_eq!(p["views"].as_array().unwrap().len(), 4);
    assert_eq!(p["degenerate"], false);
}

#[test]
fn single_view_scene_is_degenerate_but_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), 3, 2, 48);
    for kind in ["Image", "Specular", "Depth", "Normal"] {
        fs::remove_file(scene.join(io::RENDER_DIR).join(io::image_file_name(kind, "001"))).unwrap();
    }
    let det = tmp.path().join("det");
    let o = speclight(&["detect", "--scene", &s(&scene), "--out", &s(&det)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("WARN"));
    let p = provenance(&det);
    assert_eq!(p["degenerate"], true);
    assert_eq!(p["views"][0]["initial"], p["views"][0]["surviving"]);
}

#[test]
fn larger_phi_never_keeps_more_faces() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), 5, 4, 64);
    let mut counts = Vec::new();
    for phi in ["0", "1"] {
        let det = tmp.path().join(format!("det_{phi}"));
        let o = speclight(&["detect", "--scene", &s(&scene), "--out", &s(&det), "--phi", phi]);
        assert_eq!(o.status.code(), Some(0));
        counts.push(surviving(&provenance(&det)));
    }
    assert!(counts[1] <= counts[0], "{counts:?}");
}

fn gt_masks(scene: &Path, out: &Path, keep: impl Fn(u8) -> bool) {
    fs::create_dir_all(out).unwrap();
    let m = io::load_scene(scene).unwrap();
    for v in &m.views {
        let gt = io::read_gray_png(v.specular.as_ref().unwrap()).unwrap();
        let mask = SpecularMask::new(
            gt.width(),
            gt.height(),
            gt.data().iter().map(|&g| keep(g)).collect(),
        )
        .unwrap();
        write_mask_png(&mask, out.join(io::image_file_name("Mask", &v.id))).unwrap();
    }
}

/// Overwrites every groundtruth map with a binary 0/255 pattern.
fn binarize_groundtruth(scene: &Path) {
    let m = io::load_scene(scene).unwrap();
    for (k, v) in m.views.iter().enumerate() {
        let path = v.specular.as_ref().unwrap();
        let gt = io::read_gray_png(path).unwrap();
        let data = (0..gt.data().len())
            .map(|i| if (i / 7 + k) % 5 == 0 { 255 } else { 0 })
            .collect();
        io::write_gray_png(&speclight_core::Gray8Image::new(gt.width(), gt.height(), data).unwrap(), path)
            .unwrap();
    }
}

#[test]
fn eval_perfect_and_empty_masks() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), 6, 3, 32);
    binarize_groundtruth(&scene);
    let perfect = tmp.path().join("perfect");
    gt_masks(&scene, &perfect, |g| g == 255);
    let o = speclight(&["eval", "--scene", &s(&scene), "--masks", &s(&perfect)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "1.0000/3");

    let empty = tmp.path().join("empty");
    gt_masks(&scene, &empty, |_| false);
    let o = speclight(&["eval", "--scene", &s(&scene), "--masks", &s(&empty)]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "0.0000/3");
    let csv = fs::read_to_string(empty.join("eval.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("view_id,accuracy"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn eval_matches_an_independent_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), 7, 2, 32);
    let masks = tmp.path().join("m");
    // A mask that only partly agrees with the graded groundtruth.
    gt_masks(&scene, &masks, |g| g >= 200);
    let out = tmp.path().join("report");
    let o = speclight(&[
        "eval", "--scene", &s(&scene), "--masks", &s(&masks), "--out", &s(&out),
        "--threshold-lo", "150", "--threshold-hi", "250",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("eval.csv")).unwrap();
    let m = io::load_scene(&scene).unwrap();
    for (line, v) in csv.lines().skip(1).zip(&m.views) {
        let (id, acc) = line.split_once(',').unwrap();
        assert_eq!(id, v.id);
        let gt = io::read_gray_png(v.specular.as_ref().unwrap()).unwrap();
        let mut total = 0.0;
        for t in 150..=250u8 {
            let (mut i, mut u) = (0, 0);
            for &g in gt.data() {
                let (a, b) = (g >= t, g >= 200);
                i += usize::from(a && b);
                u += usize::from(a || b);
            }
            total += if u == 0 { 1.0 } else { i as f64 / u as f64 };
        }
        let expected = total / 101.0;
        assert!((acc.parse::<f64>().unwrap() - expected).abs() < 1e-9);
    }
}

#[test]
fn eval_lists_views_without_masks() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), 8, 3, 24);
    let masks = tmp.path().join("m");
    gt_masks(&scene, &masks, |_| false);
    fs::remove_file(masks.join("Mask_001.png")).unwrap();
    fs::remove_file(masks.join("Mask_002.png")).unwrap();
    let o = speclight(&["eval", "--scene", &s(&scene), "--masks", &s(&masks)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("001, 002"), "{err}");
}

#[test]
fn missing_scene_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = speclight(&["detect", "--scene", &s(&tmp.path().join("nope")), "--out", &s(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bench_reports_samples_and_median() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), 9, 2, 32);
    let o = speclight(&["bench", "--scene", &s(&scene), "--repeats", "3", "--workers", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let j: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(j["samples"].as_array().unwrap().len(), 3);
    assert_eq!(j["workers"], 1);
    let median = j["median"].as_f64().unwrap();
    assert!((j["per_view"].as_f64().unwrap() - median / 2.0).abs() < 1e-12);
}

#[test]
fn bench_single_view_mean_equals_total() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), 9, 2, 32);
    fs::remove_file(scene.join(io::RENDER_DIR).join(io::image_file_name("Image", "001"))).unwrap();
    let o = speclight(&["bench", "--scene", &s(&scene), "--repeats", "1"]);
    let j: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(j["per_view"], j["median"]);
}

#[test]
fn bench_time_grows_roughly_linearly_with_views() {
    let tmp = tempfile::tempdir().unwrap();
    let small = synth(tmp.path(), 10, 4, 96);
    let large = synth(tmp.path(), 10, 8, 96);
    let per_view = |scene: &Path| {
        let o = speclight(&["bench", "--scene", &s(scene), "--repeats", "5", "--workers", "1"]);
        let j: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        (j["median"].as_f64().unwrap(), j["per_view"].as_f64().unwrap())
    };
    let (t4, p4) = per_view(&small);
    let (t8, p8) = per_view(&large);
    assert!(t8 > t4, "{t4} {t8}");
    // All-pairs filtering is quadratic but cheap; rasterization dominates.
    assert!(p8 < 2.0 * p4 && p4 < 2.0 * p8, "{p4} {p8}");
}

#[test]
fn workers_env_fallback() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), 11, 2, 16);
    let o = Command::new(env!("CARGO_BIN_EXE_speclight"))
        .args(["bench", "--scene", &s(&scene), "--repeats", "1"])
        .env("SPECLIGHT_WORKERS", "2")
        .output()
        .unwrap();
    let j: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(j["workers"], 2);
    let o = Command::new(env!("CARGO_BIN_EXE_speclight"))
        .args(["bench", "--scene", &s(&scene), "--workers", "0"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_feeds_detection() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), 12, 2, 32);
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "[aggregation]\nphi = 0.75\n[single_view]\nhigh = 230\n").unwrap();
    let det = tmp.path().join("det");
    let o = speclight(&["detect", "--scene", &s(&scene), "--out", &s(&det), "--config", &s(&cfg), "--sv-low", "170"]);
    assert_eq!(o.status.code(), Some(0));
    let p = provenance(&det);
    assert_eq!(p["config"]["aggregation"]["phi"], 0.75);
    assert_eq!(p["config"]["single_view"]["high"], 230);
    assert_eq!(p["config"]["single_view"]["low"], 170);
}
