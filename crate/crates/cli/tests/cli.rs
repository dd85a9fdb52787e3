use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn viewseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viewseg")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = viewseg(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two-class run on the two-sphere shape, small enough for a unit test.
fn small_config(dir: &Path, epochs: usize) -> PathBuf {
    let cfg = serde_json::json!({
        "decompose": {"views": 3, "width": 20, "height": 20},
        "architecture": {
            "input_channels": 6,
            "ic_layers": [{"channels": 4, "gaussians": 2, "radius": 1}],
            "fc_hidden": [],
            "classes": 2
        },
        "epochs": epochs,
        "crf": {"epochs": 1},
        "classes": 2,
        "label_names": []
    });
    let path = dir.join(format!("config_{epochs}.json"));
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn dataset(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    ok(&["synth", "--shape", "two-spheres", "--count", "2", "--out", s(&data)]);
    data
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn decompose_writes_views_and_stable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let cfg = small_config(dir.path(), 1);
    let mesh = data.join("shape_0000.ply");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["decompose", s(&mesh), "--config", s(&cfg), "--out", s(&a)]);
    ok(&["decompose", s(&mesh), "--config", s(&cfg), "--out", s(&b)]);
    for m in 1..=3 {
        assert!(a.join(format!("view_{m:02}.ply")).exists());
        assert!(a.join(format!("view_{m:02}.json")).exists());
    }
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());
    assert_eq!(read_json(&a.join("manifest.json"))["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn unreadable_mesh_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.ply");
    let out = viewseg(&["decompose", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.ply"));
}

#[test]
fn invalid_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"learning_rate": -1}"#).unwrap();
    let out = viewseg(&["synth", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_infer_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let cfg = small_config(dir.path(), 2);
    let model_dir = dir.path().join("model");
    ok(&["train", s(&data), "--config", s(&cfg), "--out", s(&model_dir)]);
    let log = fs::read_to_string(model_dir.join("train_log.jsonl")).unwrap();
    let steps: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!steps.is_empty());
    assert!(steps.iter().all(|r| r.get("epoch").is_some() && r.get("loss").is_some()));
    let ck = model_dir.join("model.json");
    assert!(read_json(&ck)["crf"].is_object());

    let mesh = data.join("shape_0000.ply");
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["infer", s(&mesh), "--checkpoint", s(&ck), "--config", s(&cfg), "--out", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    };
    let (a, b, plain) = (run("a", &[]), run("b", &[]), run("plain", &["--no-crf"]));
    for f in ["labels.json", "pdf.json", "segmentation.ply", "entropy.ply", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let labels = read_json(&a.join("labels.json"));
    assert_eq!(labels["L"], 2);
    let n = labels["labels"].as_array().unwrap().len();
    assert!(n > 0);

    // --no-crf labels are the argmax of the aggregated pdf
    let pdf = read_json(&plain.join("pdf.json"));
    assert_eq!(pdf["refined"], false);
    let argmax: Vec<u64> = pdf["pdf"]
        .as_array()
        .unwrap()
        .iter()
        .map(|row| {
            let r: Vec<f64> = row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
            if r[1] > r[0] { 2 } else { 1 }
        })
        .collect();
    let plain_labels: Vec<u64> =
        read_json(&plain.join("labels.json"))["labels"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
    assert_eq!(plain_labels, argmax);

    let report_path = dir.path().join("report.json");
    ok(&[
        "eval",
        s(&a.join("labels.json")),
        s(&mesh),
        "--checkpoint",
        s(&ck),
        "--config",
        s(&cfg),
        "--out",
        s(&report_path),
    ]);
    let report = read_json(&report_path);
    assert_eq!(report["parameter_count"], 2 * (6 * 4 + 4) + 2 * 5);
    assert!(report["accuracy"].as_f64().unwrap() >= 0.0);

    // a different configuration is refused
    let other = small_config(dir.path(), 3);
    let out = viewseg(&["eval", s(&a.join("labels.json")), s(&mesh), "--config", s(&other)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_of_ground_truth_is_perfect_and_mismatch_fails() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let mesh = data.join("shape_0000.ply");
    let text = fs::read_to_string(&mesh).unwrap();
    let n: usize = text.lines().find_map(|l| l.strip_prefix("element vertex ")).unwrap().trim().parse().unwrap();
    // vertex lines follow the header and end with the label
    let body: Vec<&str> = text.lines().skip_while(|l| *l != "end_header").skip(1).take(n).collect();
    let labels: Vec<u32> = body.iter().map(|l| l.split_whitespace().last().unwrap().parse().unwrap()).collect();
    let pred = dir.path().join("pred.json");
    fs::write(&pred, serde_json::json!({"labels": labels, "L": 2}).to_string()).unwrap();
    let out = ok(&["eval", s(&pred), s(&mesh)]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["accuracy"], 1.0);
    assert_eq!(report["mean_iou"], 1.0);

    fs::write(&pred, serde_json::json!({"labels": [1, 2], "L": 2}).to_string()).unwrap();
    assert_ne!(viewseg(&["eval", s(&pred), s(&mesh)]).status.code(), Some(0));
}

#[test]
fn zero_epochs_saves_initialization_and_resume_continues_steps() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let zero = small_config(dir.path(), 0);
    let init = dir.path().join("init");
    ok(&["train", s(&data), "--config", s(&zero), "--seed", "3", "--out", s(&init)]);
    assert_eq!(fs::read_to_string(init.join("train_log.jsonl")).unwrap(), "");
    assert_eq!(read_json(&init.join("model.json"))["step"], 0);

    let one = small_config(dir.path(), 1);
    let first = dir.path().join("first");
    ok(&["train", s(&data), "--config", s(&one), "--out", s(&first)]);
    let second = dir.path().join("second");
    ok(&["train", s(&data), "--config", s(&one), "--resume", s(&first.join("model.json")), "--out", s(&second)]);
    let steps = |p: &Path| -> Vec<u64> {
        fs::read_to_string(p.join("train_log.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str::<Value>(l).unwrap()["step"].as_u64().unwrap())
            .collect()
    };
    let (a, b) = (steps(&first), steps(&second));
    assert!(!a.is_empty() && b.len() == a.len());
    assert_eq!(b[0], a[a.len() - 1] + 1);
    assert!(b.windows(2).all(|w| w[1] == w[0] + 1));
}
