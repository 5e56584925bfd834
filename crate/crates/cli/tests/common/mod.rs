#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn gwcrp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwcrp")).args(args).output().expect("spawn gwcrp")
}

pub fn ok(args: &[&str]) -> Output {
    let out = gwcrp(args);
    assert!(
        out.status.success(),
        "gwcrp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Simulate one lattice replicate into `dir` and return (data, graph).
pub fn lattice_data(dir: &Path, design: &str, seed: u64) -> (PathBuf, PathBuf) {
    let sim = dir.join("sim");
    ok(&["simulate", "--design", design, "--replicates", "1", "--seed", &seed.to_string(), "--out", path(&sim)]);
    (sim.join("replicate_001.csv"), sim.join("graph.txt"))
}

pub fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).expect("read json")).expect("parse json")
}

pub fn schema_errors(schema_file: &str, instance: &serde_json::Value) -> Vec<String> {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(schema_file);
    let schema = read_json(&schema_path);
    let validator = jsonschema::validator_for(&schema).expect("valid schema");
    validator.iter_errors(instance).map(|e| e.to_string()).collect()
}

pub const QUICK: [&str; 4] = ["--iters", "300", "--burnin", "100"];
