use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lasround(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lasround"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = lasround(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Generates C5, solves at depth 2 and rounds; returns the run path.
fn c5_run(dir: &Path) -> std::path::PathBuf {
    ok(dir, &["gen", "cycle", "-n", "5", "--out", "c5.json"]);
    ok(dir, &["solve", "c5.json", "--depth", "2", "--out", "run.json"]);
    ok(dir, &["round", "run.json", "--strategy", "greedy", "--trials", "8", "--seed", "1"]);
    dir.join("run.json")
}

#[test]
fn pipeline_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    let run = c5_run(tmp.path());
    let v = read_json(&run);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["rounding"]["best_value"], 0.8);
    let out = ok(tmp.path(), &["verify", "run.json"]);
    assert!(out.lines().all(|l| l.starts_with("PASS")), "{out}");
    assert!(out.contains("sandwich"));
}

#[test]
fn corrupted_moment_entry_fails_consistency() {
    let tmp = tempfile::tempdir().unwrap();
    let run = c5_run(tmp.path());
    let mut v = read_json(&run);
    let tables = v["moments"]["tables"].as_array_mut().expect("stored tables");
    let last = tables.last_mut().unwrap();
    let probs = last["probs"].as_array_mut().unwrap();
    probs[0] = Value::from(probs[0].as_f64().unwrap() + 0.05);
    probs[1] = Value::from(probs[1].as_f64().unwrap() - 0.05);
    fs::write(&run, v.to_string()).unwrap();
    let out = lasround(tmp.path(), &["verify", "run.json"]);
    assert!(!out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("FAIL moment_consistency")), "{text}");
}

#[test]
fn perturbed_rounded_value_fails_sandwich() {
    let tmp = tempfile::tempdir().unwrap();
    let run = c5_run(tmp.path());
    let mut v = read_json(&run);
    v["rounding"]["best_value"] = Value::from(0.9);
    fs::write(&run, v.to_string()).unwrap();
    let out = lasround(tmp.path(), &["verify", "run.json"]);
    assert!(!out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("FAIL sandwich")), "{text}");
}

#[test]
fn schema_mismatch_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let run = c5_run(tmp.path());
    let mut v = read_json(&run);
    v["schema_version"] = Value::from(7);
    fs::write(&run, v.to_string()).unwrap();
    let out = lasround(tmp.path(), &["verify", "run.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));
}

#[test]
fn generator_is_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = |seed: &str| {
        ok(
            tmp.path(),
            &["gen", "random-regular", "-n", "12", "-d", "3", "--problem", "planted-ug", "-k", "3", "--seed", seed],
        )
    };
    assert_eq!(gen("4"), gen("4"));
    assert_ne!(gen("4"), gen("5"));
    let bad = lasround(tmp.path(), &["gen", "random-regular", "-n", "5", "-d", "3"]);
    assert!(!bad.status.success());
}

#[test]
fn spectrum_of_disjoint_edges() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen", "complete", "-n", "2", "--copies", "3", "--out", "g.json"]);
    let out = ok(tmp.path(), &["spectrum", "g.json", "--tau", "0.9"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["rank_at"]["0.9"], 3);
}

const SWEEP: &str = r#"{
  "master_seed": 17,
  "instances": [
    {"name": "c5", "graph": {"kind": "cycle", "n": 5}, "problem": {"kind": "max-cut"}},
    {"name": "odd", "graph": {"kind": "random-regular", "n": 5, "d": 3}, "problem": {"kind": "max-cut"}}
  ],
  "hierarchies": [{"kind": "lasserre", "depth": 1}, {"kind": "lasserre", "depth": 2}, {"kind": "lasserre", "depth": 3}],
  "strategies": ["random"],
  "trials": [4]
}"#;

#[test]
fn experiment_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("sweep.json"), SWEEP).unwrap();
    ok(tmp.path(), &["experiment", "sweep.json", "--out", "a"]);
    let one = Command::new(env!("CARGO_BIN_EXE_lasround"))
        .current_dir(tmp.path())
        .env("LASROUND_THREADS", "1")
        .args(["experiment", "sweep.json", "--out", "b"])
        .output()
        .unwrap();
    assert!(one.status.success());
    for f in ["report.json", "report.csv"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    assert!(tmp.path().join("a/timings.json").exists());

    let report = read_json(&tmp.path().join("a/report.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    let sdp: Vec<f64> = rows[..3].iter().map(|r| r["sdp_objective"].as_f64().unwrap()).collect();
    assert!(sdp.windows(2).all(|w| w[1] <= w[0] + 2e-3), "{sdp:?}");
    assert!(rows[3..].iter().all(|r| r["error"].is_string()));
    let csv = fs::read_to_string(tmp.path().join("a/report.csv")).unwrap();
    assert!(csv.starts_with("# schema_version=1\nrun_id,instance,"));
}

#[test]
fn empty_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"master_seed": 1, "instances": [], "hierarchies": [{"kind": "lasserre", "depth": 1}],
                  "strategies": ["greedy"], "trials": [1]}"#;
    fs::write(tmp.path().join("e.json"), cfg).unwrap();
    ok(tmp.path(), &["experiment", "e.json", "--out", "r"]);
    let report = read_json(&tmp.path().join("r/report.json"));
    assert!(report["rows"].as_array().unwrap().is_empty());
}
