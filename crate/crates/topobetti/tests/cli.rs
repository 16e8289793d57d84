use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::tempdir;

fn topobetti(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topobetti")).args(args).env_remove("TOPOBETTI_MAX_CELLS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_str(&stdout(o)).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn build(dir: &Path, name: &str, args: &[&str]) -> String {
    let path = dir.join(name).to_str().unwrap().to_owned();
    let mut full = vec!["build"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["-o", &path]);
    let o = topobetti(&full);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    path
}

#[test]
fn build_reports_architecture() {
    let dir = tempdir().unwrap();
    let o = topobetti(&["build", "--d", "2", "--m", "4", "--w", "3", "--offset", "-o", dir.path().join("f.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "architecture (2,8,5,1)\nM 4\n");
    let o = topobetti(&["build", "--d", "3", "--m", "2,2", "--w", "1,1", "--offset", "-o", dir.path().join("g.json").to_str().unwrap()]);
    assert_eq!(stdout(&o), "architecture (3,6,6,6,1)\nM 4\n");
    let o = topobetti(&["build", "--d", "2", "--m", "3", "--w", "3", "-o", dir.path().join("x.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("m must be even"));
    assert!(!dir.path().join("x.json").exists());
    let o = topobetti(&["build", "--d", "3", "--m", "2", "--w", "1", "-o", dir.path().join("y.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(topobetti(&[]).status.code(), Some(1));
    assert_eq!(topobetti(&["analyze"]).status.code(), Some(1));
    assert_eq!(topobetti(&["analyze", "/nonexistent.json"]).status.code(), Some(1));
    assert_eq!(topobetti(&["predict", "--d", "2", "--M", "3", "--w", "2"]).status.code(), Some(1));
    assert_eq!(topobetti(&["--help"]).status.code(), Some(0));
}

#[test]
fn analyze_agrees_and_reports() {
    let dir = tempdir().unwrap();
    let f = build(dir.path(), "f.json", &["--d", "2", "--m", "4", "--w", "4", "--offset"]);
    let out = dir.path().join("r.json");
    let o = topobetti(&["analyze", &f, "--predict", "4,4", "--oracle", "256", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "betti (12, 4) all-agree\n");
    let first = std::fs::read_to_string(&out).unwrap();
    let r: Value = serde_json::from_str(&first).unwrap();
    assert_eq!(r["schema"], 1);
    assert_eq!(r["betti"], serde_json::json!([12, 4]));
    assert_eq!(r["oracle"]["beta0"], 12);
    assert_eq!(r["checks"]["all_agree"], true);
    assert_eq!(r["network"]["sha256"].as_str().unwrap().len(), 64);
    assert!(r.get("timings").is_none());
    // Byte-stable across runs.
    topobetti(&["analyze", &f, "--predict", "4,4", "--oracle", "256", "--out", out.to_str().unwrap()]);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), first);
}

#[test]
fn analyze_flags_disagreement_with_exit_two() {
    let dir = tempdir().unwrap();
    let f = build(dir.path(), "f.json", &["--d", "2", "--m", "4", "--w", "4", "--offset"]);
    let o = topobetti(&["analyze", &f, "--predict", "8,4"]);
    assert_eq!(o.status.code(), Some(2));
    let r = json(&o);
    assert_eq!(r["checks"]["predicted_agree"], serde_json::json!([false, false]));
    assert!(!r["checks"]["disagreements"].as_array().unwrap().is_empty());
}

#[test]
fn analyze_constant_positive_network() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("c.json");
    std::fs::write(&p, r#"{"architecture":[2,1],"layers":[{"weights":[["0","0"]],"bias":["1"]}]}"#).unwrap();
    let o = topobetti(&["analyze", p.to_str().unwrap(), "--box", "0:1,-1:1/2"]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&o);
    assert_eq!(r["betti"], serde_json::json!([0, 0]));
    assert_eq!(r["empty_sublevel"], true);
    assert_eq!(r["box"]["lower"], serde_json::json!(["0", "-1"]));
    let o = topobetti(&["analyze", p.to_str().unwrap(), "--box", "0:1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn cell_cap_from_environment() {
    let dir = tempdir().unwrap();
    let f = build(dir.path(), "f.json", &["--d", "2", "--m", "4", "--w", "3", "--offset"]);
    let o = Command::new(env!("CARGO_BIN_EXE_topobetti")).args(["analyze", &f]).env("TOPOBETTI_MAX_CELLS", "10").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_topobetti")).args(["analyze", &f]).env("TOPOBETTI_MAX_CELLS", "lots").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn predict_and_bounds() {
    let r = json(&topobetti(&["predict", "--d", "2", "--M", "8", "--w", "4"]));
    assert_eq!(r["betti"], serde_json::json!([40, 24]));
    assert_eq!(r["euler"], 16);
    let r = json(&topobetti(&["predict", "--d", "2", "--M", "4", "--w", "3", "--rounding", "ceil"]));
    assert_eq!(r["betti"], serde_json::json!([12, 4]));
    let r = json(&topobetti(&["bounds", "--arch", "2,8,5,1"]));
    assert_eq!(r["serra_bound"], "592");
    assert_eq!(r["betti_bounds"].as_array().unwrap().len(), 2);
}

#[test]
fn stability_and_oracle() {
    let dir = tempdir().unwrap();
    let f = build(dir.path(), "f.json", &["--d", "2", "--m", "4", "--w", "3", "--offset"]);
    let r = json(&topobetti(&["stability", &f, "--delta", "1/1000000", "--trials", "4", "--seed", "7"]));
    assert_eq!(r["topologically_stable"], false);
    assert_eq!(r["status"], "not-applicable");
    assert_eq!(r["seed"], 7);
    let o = topobetti(&["stability", &f, "--delta", "1/1000000", "--trials", "4", "--seed", "7", "--force"]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&o);
    assert_eq!(r["status"], "consistent");
    assert_eq!(r["certified_delta"], "1/1000000");
    assert_eq!(r["trial_betti"], serde_json::json!([[6, 2], [6, 2], [6, 2], [6, 2]]));
    let r = json(&topobetti(&["stability", &f, "--check-only"]));
    assert!(r["certified_delta"].is_null());
    assert_eq!(topobetti(&["stability", &f, "--trials", "0"]).status.code(), Some(1));

    let pgm = dir.path().join("g.pgm");
    let csv = dir.path().join("g.csv");
    let r = json(&topobetti(&["oracle", &f, "-N", "192", "--pgm", pgm.to_str().unwrap(), "--csv", csv.to_str().unwrap()]));
    assert_eq!(r["beta0"], 6);
    assert_eq!(r["points"], 193 * 193);
    assert!(std::fs::read_to_string(pgm).unwrap().starts_with("P2\n193 193\n2\n"));
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 193);
    assert_eq!(topobetti(&["oracle", &f, "-N", "100000"]).status.code(), Some(1));
}

#[test]
fn report_batches_instances() {
    let o = topobetti(&["report", "2:4:4", "2:2:2"]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&o);
    assert_eq!(r["schema"], 1);
    let inst = r["instances"].as_array().unwrap();
    assert_eq!(inst[0]["instance"], "2:4:4");
    assert_eq!(inst[0]["report"]["betti"], serde_json::json!([12, 4]));
    assert_eq!(inst[1]["report"]["oracle"]["resolution"], 64);
    assert_eq!(topobetti(&["report", "2:4"]).status.code(), Some(1));
}
