use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const GLAM: &str = env!("CARGO_BIN_EXE_glam");

fn glam(dir: &Path, args: &[&str]) -> Output {
    Command::new(GLAM).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = glam(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn tiny_run(dir: &Path) {
    ok(dir, &["--seed", "4", "synth", "--pages", "4", "--out-cells", "c.json", "--out-coco", "g.json"]);
    ok(dir, &["label", "--cells", "c.json", "--coco", "g.json", "--out", "l.json"]);
    std::fs::write(
        dir.join("cfg.json"),
        r#"{"model": {"hidden0": 32, "depth": 2, "tag_hops": 2, "embed_dim": 8}, "train": {"epochs": 2}}"#,
    )
    .unwrap();
    ok(dir, &["--seed", "4", "train", "--graphs", "l.json", "--config", "cfg.json", "--out", "m.ckpt", "--log", "log.jsonl"]);
}

#[test]
fn usage_errors_exit_nonzero_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = glam(dir.path(), &["eval", "--nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let out = glam(dir.path(), &["eval", "--gt", "missing.json", "--results", "missing.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
}

#[test]
fn schema_reports_default_parameter_count() {
    let dir = tempfile::tempdir().unwrap();
    let v: Value = serde_json::from_str(&ok(dir.path(), &["schema"])).unwrap();
    assert_eq!(v["param_count"], 1_271_942);
    assert_eq!(v["node_classes"], 12);
    assert_eq!(v["features"].as_array().unwrap().len(), 33);
}

#[test]
fn render_without_predictions_draws_only_cells() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--pages", "2", "--out-cells", "c.json", "--out-coco", "g.json"]);
    std::fs::write(dir.path().join("empty.json"), "[]").unwrap();
    ok(dir.path(), &["render", "--cells", "c.json", "--results", "empty.json", "--out", "svg"]);
    let files: Vec<_> = std::fs::read_dir(dir.path().join("svg")).unwrap().collect();
    assert_eq!(files.len(), 2);
    let svg = std::fs::read_to_string(dir.path().join("svg/synth-0-00000.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(!svg.contains("<text"));
}

#[test]
fn pipeline_round_trip_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_run(d);
    assert_eq!(std::fs::read_to_string(d.join("log.jsonl")).unwrap().lines().count(), 2);
    ok(d, &["infer", "--cells", "c.json", "--ckpt", "m.ckpt", "--gt", "g.json", "--out", "r.json", "--threads", "2"]);
    let results: Value = serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
    assert!(results.as_array().unwrap().iter().all(|r| (1..=4).contains(&r["image_id"].as_u64().unwrap())));
    let report: Value =
        serde_json::from_str(&ok(d, &["eval", "--gt", "g.json", "--results", "r.json", "--json", "--thresholds", "0.5"])).unwrap();
    assert_eq!(report["thresholds"].as_array().unwrap().len(), 1);
    let table = ok(d, &["eval", "--gt", "g.json", "--results", "r.json"]);
    assert!(table.lines().last().unwrap().starts_with("overall"));

    let bench: Value = serde_json::from_str(&ok(d, &["bench", "--cells", "c.json", "--ckpt", "m.ckpt", "--runs", "3", "--threads", "1"])).unwrap();
    assert_eq!(bench["pages"], 4);
    assert!(bench["pages_per_sec"].as_f64().unwrap() > 0.0);
    assert!(glam(d, &["bench", "--cells", "c.json", "--ckpt", "m.ckpt", "--runs", "2"]).status.code() == Some(1));
}

#[test]
fn seeded_training_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    tiny_run(a.path());
    tiny_run(b.path());
    for f in ["c.json", "g.json", "l.json", "m.ckpt", "log.jsonl"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn corrupt_checkpoint_is_rejected_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--pages", "1", "--out-cells", "c.json", "--out-coco", "g.json"]);
    std::fs::write(d.join("bad.ckpt"), b"NOTACKPT").unwrap();
    let out = glam(d, &["infer", "--cells", "c.json", "--ckpt", "bad.ckpt", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));
    assert!(!d.join("r.json").exists());
}
