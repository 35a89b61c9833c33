//! End-to-end acceptance run. Prints one `PASS`/`FAIL` line per criterion
//! and exits non-zero when a criterion fails on hardware able to meet it.
//!
//! Everything goes through the `glam` binary except the oracle suites and
//! the label-only round trips, which call the library directly.

#[path = "../../core/tests/components_oracle.rs"]
mod components_oracle;
#[path = "../../core/tests/eval_reference.rs"]
mod eval_reference;
#[path = "../../core/tests/gradient_check.rs"]
mod gradient_check;
#[path = "../../core/tests/labeler_oracle.rs"]
mod labeler_oracle;
#[path = "../../core/tests/tag_conv_oracle.rs"]
mod tag_conv_oracle;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use glam_core::eval::mean_ap;
use glam_core::featurize::FeatureSchema;
use glam_core::ingest::{load_cells, save_cells, CocoFile};
use glam_core::labeler::DEFAULT_IOU_FLOOR;
use glam_core::pipeline::gold_results;
use glam_core::synth::{generate_corpus, perturb};
use glam_core::ClassSchema;
use serde_json::Value;

const GLAM: &str = env!("CARGO_BIN_EXE_glam");

const TRAIN_PAGES: u64 = 200;
const TOTAL_PAGES: u64 = 250;
const SEED: &str = "1";

const GOLD_PAGES: usize = 500;
const GOLD_BUDGET: Duration = Duration::from_secs(30);
const TRAIN_MAP_MIN: f64 = 0.95;
const HELD_OUT_MAP_MIN: f64 = 0.85;
const LEARNING_BUDGET: Duration = Duration::from_secs(600);
const PARAMS_MIN: u64 = 500_000;
const PARAMS_MAX: u64 = 2_500_000;
const BENCH_MAX_NODES: u64 = 500;
const PAGES_PER_SEC_MIN: f64 = 20.0;
const SPEEDUP_MIN: f64 = 2.5;
const SPEEDUP_THREADS: usize = 4;
const JITTER_PX: f64 = 10.0;
const JITTER_MAP50_MIN: f64 = 0.5;

struct Outcome {
    id: u32,
    pass: bool,
    /// Failure the host cannot avoid (too few cores).
    hardware_bound: bool,
    line: String,
}

fn report(id: u32, pass: bool, line: String) -> Outcome {
    println!("{} {id}: {line}", if pass { "PASS" } else { "FAIL" });
    Outcome { id, pass, hardware_bound: false, line }
}

fn glam(dir: &Path, threads: Option<usize>, args: &[&str]) -> String {
    let mut cmd = Command::new(GLAM);
    cmd.current_dir(dir).args(args);
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t.to_string());
    }
    let out = cmd.output().expect("glam runs");
    assert!(
        out.status.success(),
        "glam {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

fn subset(coco: &CocoFile, keep: impl Fn(u64) -> bool) -> CocoFile {
    CocoFile {
        images: coco.images.iter().filter(|i| keep(i.id)).cloned().collect(),
        annotations: coco.annotations.iter().filter(|a| keep(a.image_id)).cloned().collect(),
        categories: coco.categories.clone(),
    }
}

/// Artifacts of one synth → label → train → infer → eval run.
struct Run {
    dir: PathBuf,
    elapsed: Duration,
    train_map: f64,
    held_out_map: f64,
    final_edge_acc: f64,
}

fn overall(json: &str) -> f64 {
    let v: Value = serde_json::from_str(json).expect("eval json");
    v["overall_map"].as_f64().expect("overall_map")
}

fn last_edge_acc(log: &Path) -> f64 {
    let text = std::fs::read_to_string(log).expect("training log");
    let last: Value = serde_json::from_str(text.lines().last().expect("log has lines")).expect("log line");
    last["val"]["edge_acc"].as_f64().expect("held-out edge accuracy")
}

fn split(dir: &Path) {
    let pages = load_cells(&dir.join("cells.json")).unwrap();
    let coco = CocoFile::load(&dir.join("coco.json")).unwrap();
    let (tr, va) = pages.split_at(TRAIN_PAGES as usize);
    save_cells(tr, &dir.join("train_cells.json")).unwrap();
    save_cells(va, &dir.join("val_cells.json")).unwrap();
    subset(&coco, |id| id <= TRAIN_PAGES).save(&dir.join("train_coco.json")).unwrap();
    subset(&coco, |id| id > TRAIN_PAGES).save(&dir.join("val_coco.json")).unwrap();
}

fn pipeline(dir: &Path, config: Option<&str>) -> Run {
    let one = Some(1);
    let start = Instant::now();
    glam(dir, one, &["--seed", SEED, "synth", "--pages", &TOTAL_PAGES.to_string(), "--out-cells", "cells.json", "--out-coco", "coco.json"]);
    split(dir);
    for part in ["train", "val"] {
        glam(dir, one, &["label", "--cells", &format!("{part}_cells.json"), "--coco", &format!("{part}_coco.json"), "--out", &format!("{part}_graphs.json")]);
    }
    let mut train = vec!["--seed", SEED, "train", "--graphs", "train_graphs.json", "--val", "val_graphs.json", "--out", "model.ckpt", "--log", "train.jsonl"];
    if let Some(c) = config {
        train.extend(["--config", c]);
    }
    glam(dir, one, &train);
    let mut maps = Vec::new();
    for part in ["train", "val"] {
        let results = format!("{part}_results.json");
        let gt = format!("{part}_coco.json");
        glam(dir, one, &["infer", "--cells", &format!("{part}_cells.json"), "--ckpt", "model.ckpt", "--gt", &gt, "--out", &results, "--threads", "1"]);
        maps.push(overall(&glam(dir, one, &["eval", "--gt", &gt, "--results", &results, "--json"])));
    }
    Run {
        dir: dir.to_path_buf(),
        elapsed: start.elapsed(),
        train_map: maps[0],
        held_out_map: maps[1],
        final_edge_acc: last_edge_acc(&dir.join("train.jsonl")),
    }
}

fn oracle_suites() -> Outcome {
    let suites: [(&str, fn()); 9] = [
        ("gradient: primitives", gradient_check::primitives_match_finite_differences),
        ("gradient: sparse layers", gradient_check::sparse_layers_match_finite_differences),
        ("gradient: joint loss", gradient_check::joint_loss_matches_finite_differences_for_every_parameter),
        ("tag conv: exhaustive <= 5 nodes", tag_conv_oracle::exhaustive_graphs_up_to_five_nodes),
        ("tag conv: random <= 10 nodes", tag_conv_oracle::random_graphs_up_to_ten_nodes),
        ("components vs dfs", components_oracle::union_find_matches_dfs_on_random_graphs),
        ("labeler vs best subset", labeler_oracle::greedy_reaches_floor_whenever_some_subset_does),
        ("evaluator vs reference", eval_reference::fixture_matches_reference_evaluator),
        ("evaluator unknown category", eval_reference::unknown_category_in_results_is_schema_error),
    ];
    let mut failed = Vec::new();
    for (name, suite) in suites {
        let ok = catch_unwind(AssertUnwindSafe(suite)).is_ok();
        println!("    {} {name}", if ok { "ok  " } else { "FAIL" });
        if !ok {
            failed.push(name);
        }
    }
    let line = if failed.is_empty() {
        format!("oracle suites: {} of {} pass", suites.len(), suites.len())
    } else {
        format!("oracle suites: failing {failed:?}")
    };
    report(1, failed.is_empty(), line)
}

fn gold_round_trip() -> Outcome {
    let schema = ClassSchema::doclaynet();
    let start = Instant::now();
    let corpus = generate_corpus(GOLD_PAGES, 1, &schema).unwrap();
    let results = gold_results(&corpus.pages, &corpus.coco, &schema, &FeatureSchema::v1(), DEFAULT_IOU_FLOOR).unwrap();
    let map = mean_ap(&results, &corpus.coco, &schema).unwrap().overall_map;
    let elapsed = start.elapsed();
    report(
        2,
        map == 1.0 && elapsed < GOLD_BUDGET,
        format!("gold round trip on {GOLD_PAGES} pages: mAP {map} (want exactly 1.0), {:.2} s (< {} s)", elapsed.as_secs_f64(), GOLD_BUDGET.as_secs()),
    )
}

fn learning(run: &Run) -> Outcome {
    report(
        3,
        run.train_map >= TRAIN_MAP_MIN && run.held_out_map >= HELD_OUT_MAP_MIN && run.elapsed <= LEARNING_BUDGET,
        format!(
            "end-to-end learning: train mAP {:.4} (>= {TRAIN_MAP_MIN}), held-out mAP {:.4} (>= {HELD_OUT_MAP_MIN}), {:.0} s (<= {} s)",
            run.train_map,
            run.held_out_map,
            run.elapsed.as_secs_f64(),
            LEARNING_BUDGET.as_secs()
        ),
    )
}

fn edge_weighting(alpha4: &Run, alpha0: &Run) -> Outcome {
    report(
        4,
        alpha4.final_edge_acc >= alpha0.final_edge_acc,
        format!(
            "edge accuracy (held-out, final epoch): alpha=4 {:.4}, alpha=0 {:.4}",
            alpha4.final_edge_acc, alpha0.final_edge_acc
        ),
    )
}

fn model_scale(dir: &Path) -> Outcome {
    let v: Value = serde_json::from_str(&glam(dir, None, &["schema"])).unwrap();
    let n = v["param_count"].as_u64().unwrap();
    report(5, (PARAMS_MIN..=PARAMS_MAX).contains(&n), format!("parameter count {n} in [{PARAMS_MIN}, {PARAMS_MAX}]"))
}

fn efficiency(run: &Run) -> Outcome {
    let bench = |threads: usize| -> Value {
        let out = glam(&run.dir, None, &["bench", "--cells", "train_cells.json", "--ckpt", "model.ckpt", "--threads", &threads.to_string(), "--runs", "3"]);
        serde_json::from_str(&out).unwrap()
    };
    let single = bench(1);
    let multi = bench(SPEEDUP_THREADS);
    let nodes = single["max_nodes"].as_u64().unwrap();
    let pps1 = single["pages_per_sec"].as_f64().unwrap();
    let ppsk = multi["pages_per_sec"].as_f64().unwrap();
    let speedup = ppsk / pps1;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let pass = nodes <= BENCH_MAX_NODES && pps1 >= PAGES_PER_SEC_MIN && speedup >= SPEEDUP_MIN;
    let mut line = format!(
        "bench (<= {BENCH_MAX_NODES} nodes, max {nodes}): {pps1:.1} pages/s single-threaded (>= {PAGES_PER_SEC_MIN}), {SPEEDUP_THREADS}-thread speedup {speedup:.2}x (>= {SPEEDUP_MIN}x), {cores} core(s) available"
    );
    let hardware_bound = !pass && cores < SPEEDUP_THREADS && nodes <= BENCH_MAX_NODES && pps1 >= PAGES_PER_SEC_MIN;
    if hardware_bound {
        line.push_str("; speedup unattainable on this host");
    }
    let mut o = report(6, pass, line);
    o.hardware_bound = hardware_bound;
    o
}

fn determinism(a: &Run, b: &Run) -> Outcome {
    let files = ["cells.json", "coco.json", "train_graphs.json", "model.ckpt", "train_results.json", "val_results.json"];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(a.dir.join(f)).unwrap() != std::fs::read(b.dir.join(f)).unwrap())
        .collect();
    let line = if differing.is_empty() {
        format!("two seeded runs byte-identical across {files:?}")
    } else {
        format!("seeded runs differ in {differing:?}")
    };
    report(7, differing.is_empty(), line)
}

fn robustness() -> Outcome {
    let schema = ClassSchema::doclaynet();
    let corpus = generate_corpus(200, 1, &schema).unwrap();
    let mut ladder = Vec::new();
    for jitter in [0.0, 2.0, 5.0, JITTER_PX] {
        let noisy = perturb(&corpus, jitter, 0.0, 1);
        let results = gold_results(&noisy.pages, &noisy.coco, &schema, &FeatureSchema::v1(), DEFAULT_IOU_FLOOR).unwrap();
        let r = mean_ap(&results, &corpus.coco, &schema).unwrap();
        ladder.push((jitter, r.overall_at(0.5).unwrap(), r.overall_at(0.95).unwrap()));
    }
    let &(_, at50, at95) = ladder.last().unwrap();
    let steps: Vec<String> = ladder.iter().map(|(j, a, b)| format!("{j}px {a:.3}/{b:.3}")).collect();
    report(
        8,
        at50 >= JITTER_MAP50_MIN && at95 < at50,
        format!("jitter ladder mAP@0.5/@0.95 [{}]: at {JITTER_PX}px {at50:.3} >= {JITTER_MAP50_MIN} and dropping to {at95:.3}", steps.join(", ")),
    )
}

fn main() {
    let root = tempfile::tempdir().unwrap();
    let dirs: Vec<PathBuf> = ["run_a", "run_b", "alpha0"].iter().map(|d| root.path().join(d)).collect();
    for d in &dirs {
        std::fs::create_dir_all(d).unwrap();
    }
    std::fs::write(dirs[2].join("alpha0.json"), r#"{"model": {"alpha": 0.0}}"#).unwrap();

    let mut outcomes = vec![oracle_suites(), gold_round_trip()];
    let run_a = pipeline(&dirs[0], None);
    outcomes.push(learning(&run_a));
    let alpha0 = pipeline(&dirs[2], Some("alpha0.json"));
    outcomes.push(edge_weighting(&run_a, &alpha0));
    outcomes.push(model_scale(&dirs[0]));
    outcomes.push(efficiency(&run_a));
    let run_b = pipeline(&dirs[1], None);
    outcomes.push(determinism(&run_a, &run_b));
    outcomes.push(robustness());

    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("acceptance: {passed}/{} criteria pass", outcomes.len());
    let blocking: Vec<&Outcome> = outcomes.iter().filter(|o| !o.pass && !o.hardware_bound).collect();
    for o in outcomes.iter().filter(|o| !o.pass && o.hardware_bound) {
        println!("note: criterion {} fails for lack of cores, not counted: {}", o.id, o.line);
    }
    if !blocking.is_empty() {
        for o in blocking {
            eprintln!("criterion {} failed: {}", o.id, o.line);
        }
        std::process::exit(1);
    }
}
