use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn aqc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aqc"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    aqc(dir, args).status.code().expect("exit code")
}

fn workspace(files: &[(&str, &str)]) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in files {
        std::fs::write(dir.path().join(name), text).unwrap();
    }
    dir
}

fn read_json(dir: &Path, name: &str) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join(name)).unwrap()).unwrap()
}

const EDGE: &str = "p 2\ne 0 1\n";
const K5: &str = "p 5\ne 0 1\ne 0 2\ne 0 3\ne 0 4\ne 1 2\ne 1 3\ne 1 4\ne 2 3\ne 2 4\ne 3 4\n";

#[test]
fn oracle_succeeds_and_writes_manifest() {
    let dir = workspace(&[("edge.txt", EDGE)]);
    assert_eq!(code(dir.path(), &["oracle", "edge.txt", "--out", "o.json"]), 0);
    let v = read_json(dir.path(), "o.json");
    let manifest = &v["manifest"];
    assert_eq!(manifest["command"], "oracle");
    assert_eq!(manifest["inputs"]["edge.txt"].as_str().unwrap().len(), 64);
    assert!(manifest.get("timestamp_unix").is_some());
}

#[test]
fn deterministic_flag_drops_timestamp() {
    let dir = workspace(&[("edge.txt", EDGE)]);
    assert_eq!(code(dir.path(), &["--deterministic", "oracle", "edge.txt", "--out", "o.json"]), 0);
    assert!(read_json(dir.path(), "o.json")["manifest"].get("timestamp_unix").is_none());
}

#[test]
fn missing_input_is_io_error() {
    let dir = workspace(&[]);
    assert_eq!(code(dir.path(), &["oracle", "nope.txt"]), 1);
}

#[test]
fn nonplanar_graph_rejected_when_planarity_required() {
    let dir = workspace(&[("k5.txt", K5)]);
    assert_eq!(code(dir.path(), &["oracle", "k5.txt", "--require-planar"]), 2);
    assert_eq!(code(dir.path(), &["oracle", "k5.txt"]), 0);
}

#[test]
fn json_graph_chosen_by_extension() {
    let dir = workspace(&[("g.json", r#"{"n":3,"edges":[[0,1],[1,2]]}"#), ("bad.json", r#"{"n":2,"edges":[[0,5]]}"#)]);
    assert_eq!(code(dir.path(), &["oracle", "g.json", "--out", "o.json"]), 0);
    assert_eq!(read_json(dir.path(), "o.json")["size"], 2);
    assert_eq!(code(dir.path(), &["oracle", "bad.json"]), 2);
}

#[test]
fn even_redundancy_is_validation_error() {
    let dir = workspace(&[("edge.txt", EDGE)]);
    assert_eq!(code(dir.path(), &["embed", "edge.txt", "--rows", "8", "--cols", "8", "--redundancy", "4"]), 2);
}

#[test]
fn fully_defective_lattice_is_capacity_error() {
    let defects: String = (0..3).flat_map(|r| (0..3).map(move |c| format!("{r} {c}\n"))).collect();
    let dir = workspace(&[("edge.txt", EDGE), ("defects.txt", &defects)]);
    let args = ["embed", "edge.txt", "--rows", "3", "--cols", "3", "--defects", "defects.txt", "--retries", "2"];
    assert_eq!(code(dir.path(), &args), 3);
}

#[test]
fn oversized_run_is_size_error() {
    let dir = workspace(&[("wide.txt", "p 21\n")]);
    let embed = ["embed", "wide.txt", "--rows", "10", "--cols", "10", "--out", "e.json"];
    assert_eq!(code(dir.path(), &embed), 0);
    assert_eq!(code(dir.path(), &["run", "e.json", "--total-time", "1"]), 3);
}

#[test]
fn trace_only_writes_csv() {
    let dir = workspace(&[("edge.txt", EDGE)]);
    assert_eq!(code(dir.path(), &["embed", "edge.txt", "--rows", "3", "--cols", "3", "--out", "e.json"]), 0);
    let args = ["run", "e.json", "--trace-only", "--trace-out", "t.csv", "--out", "r.json"];
    assert_eq!(code(dir.path(), &args), 0);
    let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(csv.starts_with("s,E0,"));
    assert_eq!(csv.lines().count(), 102);
    let v = read_json(dir.path(), "r.json");
    assert!(v.get("final_state").is_none());
    assert!(v["trace"]["min_gap"].as_f64().unwrap() > 0.1);
}

#[test]
fn noiseless_readout_has_no_errors() {
    let dir = workspace(&[("edge.txt", EDGE)]);
    let embed = ["embed", "edge.txt", "--rows", "8", "--cols", "8", "--redundancy", "3", "--out", "e.json"];
    assert_eq!(code(dir.path(), &embed), 0);
    let measure = ["measure", "e.json", "--ideal-ground", "--angle", "0", "--flip", "0", "--out", "m.json"];
    assert_eq!(code(dir.path(), &measure), 0);
    let stats = read_json(dir.path(), "m.json");
    assert_eq!(stats["logical_error_rate_observed"], 0.0);
    assert_eq!(stats["physical_flip_rate_observed"], 0.0);
    assert_eq!(stats["fraction_valid"], 1.0);
}

#[test]
fn seeded_reruns_are_byte_identical() {
    let dir = workspace(&[("edge.txt", EDGE)]);
    let run = |name: &str| {
        let args = ["--deterministic", "--seed", "9", "embed", "edge.txt", "--rows", "6", "--cols", "6", "--redundancy", "3", "--out", name];
        assert_eq!(code(dir.path(), &args), 0);
        std::fs::read(dir.path().join(name)).unwrap()
    };
    assert_eq!(run("a.json"), run("b.json"));
}

#[test]
fn json_logs_on_failure() {
    let dir = workspace(&[]);
    let out = aqc(dir.path(), &["--log", "json", "oracle", "missing.txt"]);
    assert_eq!(out.status.code(), Some(1));
    let line = String::from_utf8(out.stderr).unwrap();
    let v: Value = serde_json::from_str(line.lines().last().unwrap()).unwrap();
    assert_eq!(v["level"], "ERROR");
}
