use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn alpha_iou(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alpha-iou"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// 12 images, 3 boxes each, in pixel coordinates.
fn write_fixture(dir: &Path) -> std::path::PathBuf {
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    for id in 0..12u64 {
        let (w, h) = (400 + 10 * id, 300 + 5 * id);
        images.push(serde_json::json!({"id": id, "width": w, "height": h}));
        for k in 0..3u64 {
            let x = 20.0 + 110.0 * k as f64;
            let y = 30.0 + 7.0 * id as f64;
            annotations.push(serde_json::json!({
                "image_id": id, "category_id": k % 2,
                "bbox": [x, y, 60.0 + 5.0 * k as f64, 80.0 + id as f64]
            }));
        }
    }
    let path = dir.join("gt.json");
    std::fs::write(
        &path,
        serde_json::json!({"images": images, "annotations": annotations}).to_string(),
    )
    .unwrap();
    path
}

/// Annotations reused as detections with score 1.
fn as_detections(annotation_file: &Path, out: &Path) {
    let doc: Value =
        serde_json::from_str(&std::fs::read_to_string(annotation_file).unwrap()).unwrap();
    let dets: Vec<Value> = doc["annotations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| {
            let mut d = a.clone();
            d["score"] = 1.0.into();
            d
        })
        .collect();
    std::fs::write(out, Value::Array(dets).to_string()).unwrap();
}

fn ap_at(report: &Value, threshold: f64) -> f64 {
    report["ap_per_threshold"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| (t["threshold"].as_f64().unwrap() - threshold).abs() < 1e-9)
        .unwrap()["ap"]
        .as_f64()
        .unwrap()
}

#[test]
fn loss_curve_row_count() {
    let out = alpha_iou(&["loss-curve", "--alphas", "0.5,1,2,3", "--points", "101"]);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iou,alpha,loss,grad_mag"));
    assert_eq!(lines.count(), 4 * 101);
}

#[test]
fn perfect_detections_score_one() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_fixture(dir.path());
    let dets = dir.path().join("dets.json");
    as_detections(&gt, &dets);
    let hist = dir.path().join("hist.csv");
    let out = alpha_iou(&[
        "eval",
        "--gt",
        gt.to_str().unwrap(),
        "--dets",
        dets.to_str().unwrap(),
        "--histogram",
        hist.to_str().unwrap(),
    ]);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((report["map_50_95"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let csv = std::fs::read_to_string(hist).unwrap();
    assert_eq!(csv.lines().next(), Some("iou_threshold,count"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",36")));
}

#[test]
fn noisy_annotations_degrade_strict_thresholds_most() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_fixture(dir.path());
    let noisy = dir.path().join("noisy.json");
    let out = alpha_iou(&[
        "perturb",
        "--eta",
        "0.3",
        "--seed",
        "7",
        "--in",
        gt.to_str().unwrap(),
        "--out",
        noisy.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mean IoU"));

    let dets = dir.path().join("dets.json");
    as_detections(&noisy, &dets);
    let report_path = dir.path().join("report.json");
    let out = alpha_iou(&[
        "eval",
        "--gt",
        gt.to_str().unwrap(),
        "--dets",
        dets.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(report_path).unwrap()).unwrap();
    let (ap50, ap90) = (ap_at(&report, 0.5), ap_at(&report, 0.9));
    assert!(ap50 > ap90 + 0.3, "AP50 {ap50} AP90 {ap90}");
}

#[test]
fn perturb_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_fixture(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = alpha_iou(&[
            "perturb",
            "--eta",
            "0.2",
            "--seed",
            "3",
            "--in",
            gt.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(status.status.success());
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.json"), run("b.json"));
}

#[test]
fn regress_and_check_grad_outputs() {
    let text = stdout(&alpha_iou(&[
        "regress",
        "--kind",
        "giou",
        "--alphas",
        "1,3",
        "--init",
        "0.45,0.5,0.3,0.25",
        "--gt",
        "0.5,0.5,0.3,0.3",
        "--lr",
        "0.001",
        "--steps",
        "50",
    ]));
    assert_eq!(text.lines().next(), Some("step,alpha,iou,loss,grad_norm"));
    assert_eq!(text.lines().count(), 1 + 2 * 51);

    let report: Value = serde_json::from_str(&stdout(&alpha_iou(&[
        "check-grad",
        "--n",
        "50",
        "--seed",
        "1",
    ])))
    .unwrap();
    assert_eq!(report["n_checked"].as_u64(), Some(50));
    assert!(report["max_rel_err"].as_f64().unwrap() <= 1e-4);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(alpha_iou(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        alpha_iou(&["loss-curve", "--alphas", "1", "--bogus"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(alpha_iou(&["loss-curve"]).status.code(), Some(2));
    let bad_box = [
        "regress",
        "--alphas",
        "1",
        "--init",
        "0.5,0.5,0.2",
        "--gt",
        "0.5,0.5,0.2,0.2",
    ];
    assert_eq!(alpha_iou(&bad_box).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let out = alpha_iou(&[
        "eval",
        "--gt",
        "/nonexistent/gt.json",
        "--dets",
        "/nonexistent/d.json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    let out = alpha_iou(&["loss-curve", "--alphas=-1"]);
    assert_eq!(out.status.code(), Some(1));
}
