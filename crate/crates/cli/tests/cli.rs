use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn depthmine(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depthmine"))
        .args(args)
        .current_dir(dir)
        .env_remove("DEPTHMINE_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn error_record(out: &Output) -> Value {
    let line = String::from_utf8_lossy(&out.stderr);
    let v: Value = serde_json::from_str(line.trim()).unwrap_or_else(|e| panic!("stderr is not a JSON record ({e}): {line}"));
    v["error"].clone()
}

fn small_config(dir: &Path) -> String {
    let cfg = r#"{
        "experiment": {
            "synth": {"n_samples": 300},
            "hidden_dim": 8,
            "strategies": ["Baseline", "GMM"],
            "seeds": [1, 2, 3],
            "epochs": 40
        },
        "pipeline": {"n_scenes": 3}
    }"#;
    std::fs::write(dir.join("small.json"), cfg).unwrap();
    "small.json".to_string()
}

#[test]
fn curves_row_matches_formula() {
    let dir = tempfile::tempdir().unwrap();
    let out = depthmine(dir.path(), &["curves", "--betas", "1,2,3", "--max-err", "1.0", "--out", "dq.csv"]);
    assert!(out.status.success(), "{out:?}");
    let csv = std::fs::read_to_string(dir.path().join("dq.csv")).unwrap();
    assert!(csv.starts_with("beta,rel_error,dq\n"));
    let row = csv.lines().find(|l| l.starts_with("2,0.5,")).expect("beta=2, err=0.5 row");
    assert_eq!(row.split(',').nth(2).unwrap().parse::<f64>().unwrap(), 0.5);
}

#[test]
fn eval_of_identical_files_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    assert!(depthmine(dir.path(), &["gen", "scenes", "--export", "sc"]).status.success());
    let out = depthmine(dir.path(), &["eval", "--dets", "sc/gts.jsonl", "--gts", "sc/gts.jsonl", "--out", "m.json", "--per-class", "ate.csv"]);
    assert!(out.status.success(), "{out:?}");
    let m: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(m["metrics"]["nds"], 1.0);
    assert!(std::fs::read_to_string(dir.path().join("ate.csv")).unwrap().starts_with("class_id,ate,n_tp\n"));
}

#[test]
fn nms_reduces_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    assert!(depthmine(dir.path(), &["gen", "scenes", "--export", "sc", "--seed", "4"]).status.success());
    for name in ["a.jsonl", "b.jsonl"] {
        let out = depthmine(dir.path(), &["nms", "--dets", "sc/detections.jsonl", "--iou-thr", "0.5", "--score-mode", "cls-ctr-dq", "--out", name]);
        assert!(out.status.success(), "{out:?}");
    }
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.jsonl")).unwrap());
    let before = std::fs::read_to_string(dir.path().join("sc/detections.jsonl")).unwrap().lines().count();
    let after = String::from_utf8(a).unwrap().lines().count();
    assert!(after < before && after > 0, "{after} of {before}");

    // Running NMS on its own output keeps everything.
    assert!(depthmine(dir.path(), &["nms", "--dets", "a.jsonl", "--out", "c.jsonl"]).status.success());
    assert_eq!(std::fs::read_to_string(dir.path().join("c.jsonl")).unwrap().lines().count(), after);
}

#[test]
fn experiment_writes_reports_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for (out_dir, workers) in [("r1", "1"), ("r2", "2")] {
        let out = depthmine(dir.path(), &["experiment", "--config", &cfg, "--out", out_dir, "--workers", workers, "--pipeline"]);
        assert!(out.status.success(), "{out:?}");
    }
    for f in ["comparison.json", "comparison.csv", "pipeline.json"] {
        let a = std::fs::read(dir.path().join("r1").join(f)).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("r2").join(f)).unwrap(), "{f} differs");
    }
    let csv = std::fs::read_to_string(dir.path().join("r1/comparison.csv")).unwrap();
    assert!(csv.starts_with("strategy,seed,final_mae\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
}

#[test]
fn default_experiment_verdicts_hold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.json");
    let out = depthmine(dir.path(), &["experiment", "--config", cfg, "--out", "runs"]);
    assert!(out.status.success(), "{out:?}");
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("runs/comparison.json")).unwrap()).unwrap();
    let v = &rep["verdicts"];
    for key in ["gmm_beats_baseline", "mpm_beats_baseline", "hard_worse_than_baseline"] {
        assert_eq!(v[key], true, "{key}: {v}");
    }
}

#[test]
fn seed_override_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = depthmine(dir.path(), &["experiment", "--seeds", "1,2", "--out", "r"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!dir.path().join("r/comparison.json").exists());
}

#[test]
fn validate_fills_defaults() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("min.json"), "{}").unwrap();
    let out = depthmine(dir.path(), &["validate", "--config", "min.json"]);
    assert!(out.status.success(), "{out:?}");
    let cfg: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["experiment"]["quality"]["beta"], 2.0);
    assert_eq!(cfg["pipeline"]["iou_thr"], 0.5);
    assert_eq!(cfg["pipeline"]["eval"]["dist_thresholds"], serde_json::json!([0.5, 1.0, 2.0, 4.0]));
}

#[test]
fn config_errors_are_all_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("one.json"), r#"{"experiment": {"quality": {"beta": -1}}}"#).unwrap();
    std::fs::write(dir.path().join("two.json"), r#"{"experiment": {"quality": {"beta": -1}}, "pipeline": {"iou_thr": 0}}"#).unwrap();

    let out = depthmine(dir.path(), &["validate", "--config", "one.json"]);
    assert_eq!(out.status.code(), Some(3));
    let rec = error_record(&out);
    assert_eq!(rec["kind"], "config");
    let msgs = rec["messages"].as_array().unwrap();
    assert_eq!(msgs.len(), 1);
    assert!(msgs[0].as_str().unwrap().contains("beta"));

    let out = depthmine(dir.path(), &["experiment", "--config", "two.json", "--out", "r"]);
    assert_eq!(out.status.code(), Some(3));
    let msgs = error_record(&out)["messages"].as_array().unwrap().clone();
    assert_eq!(msgs.len(), 2);
    assert!(msgs[1].as_str().unwrap().contains("iou_thr"));
}

#[test]
fn failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.jsonl"), "{not json\n").unwrap();
    std::fs::write(dir.path().join("gts.jsonl"), "").unwrap();
    std::fs::write(dir.path().join("malformed.json"), "{").unwrap();

    let cases: [(&[&str], i32, &str); 5] = [
        (&["frobnicate"], 2, "usage"),
        (&["validate", "--config", "malformed.json"], 3, "config"),
        (&["eval", "--dets", "missing.jsonl", "--gts", "gts.jsonl"], 4, "missing_input"),
        (&["eval", "--dets", "bad.jsonl", "--gts", "gts.jsonl"], 5, "bad_input"),
        (&["eval", "--dets", "gts.jsonl", "--gts", "gts.jsonl", "--out", "m.json"], 6, "compute"),
    ];
    for (args, code, kind) in cases {
        let out = depthmine(dir.path(), args);
        assert_eq!(out.status.code(), Some(code), "{args:?}: {out:?}");
        let rec = error_record(&out);
        assert_eq!(rec["kind"], kind);
        assert_eq!(rec["exit_code"], code);
    }
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn output_dir_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_depthmine"))
        .args(["curves", "--betas", "2"])
        .current_dir(dir.path())
        .env("DEPTHMINE_OUT_DIR", "envout")
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    assert!(dir.path().join("envout/dq_curve.csv").exists());
}

#[test]
fn help_lists_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = depthmine(dir.path(), &["experiment", "--help"]);
    assert!(out.status.success());
    let help = String::from_utf8(out.stdout).unwrap();
    for flag in ["--config", "--out", "--seeds", "--workers", "--pipeline", "--out-dir", "--verbose"] {
        assert!(help.contains(flag), "missing {flag}");
    }
}

#[test]
fn regression_export_has_exact_outlier_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = depthmine(dir.path(), &["gen", "regression", "--export", "data.jsonl", "--seed", "9"]);
    assert!(out.status.success(), "{out:?}");
    let text = std::fs::read_to_string(dir.path().join("data.jsonl")).unwrap();
    let rows: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 4000);
    assert_eq!(rows.iter().filter(|r| r["outlier"] == true).count(), 1000);
}
