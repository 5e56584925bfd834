mod common;

use common::{gwcrp, ok, path, read_json, schema_errors, QUICK};
use serde_json::json;

fn trivial_design() -> serde_json::Value {
    json!({
        "regions": ["a", "b", "c", "d"],
        "edges": [["a", "b"], ["b", "c"], ["c", "d"]],
        "true_labels": [1, 1, 2, 2],
        "cluster_params": [
            { "beta": [1.0], "lambda": [0.05, 0.1] },
            { "beta": [-1.0], "lambda": [0.2, 0.4] }
        ],
        "cutpoints": [3.0],
        "subjects_per_region": 80
    })
}

#[test]
fn design_schema_accepts_bundled_designs() {
    assert!(schema_errors("design.schema.json", &trivial_design()).is_empty());
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok(&["simulate", "--design", "lattice-III", "--replicates", "1", "--out", path(&out)]);
    assert!(schema_errors("design.schema.json", &read_json(&out.join("design.json"))).is_empty());
}

#[test]
fn simulate_writes_replicates_and_round_trips_the_design() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("design.json");
    std::fs::write(&design, trivial_design().to_string()).unwrap();
    let out = dir.path().join("sim");
    ok(&["simulate", "--design", path(&design), "--replicates", "3", "--seed", "9", "--out", path(&out)]);

    let manifest = read_json(&out.join("manifest.json"));
    let reps = manifest["replicates"].as_array().unwrap();
    assert_eq!(reps.len(), 3);
    for r in reps {
        let text = std::fs::read_to_string(out.join(r["file"].as_str().unwrap())).unwrap();
        assert_eq!(text.lines().next().unwrap(), "region,time,event,x1");
        assert_eq!(text.lines().count(), 1 + 4 * 80);
    }
    let seeds: Vec<u64> = reps.iter().map(|r| r["data_seed"].as_u64().unwrap()).collect();
    assert_ne!(seeds[0], seeds[1]);

    assert_eq!(std::fs::read_to_string(out.join("truth.csv")).unwrap(), "region,label\na,1\nb,1\nc,2\nd,2\n");
    assert_eq!(read_json(&out.join("design.json"))["true_labels"], json!([1, 1, 2, 2]));

    let again = dir.path().join("again");
    ok(&["simulate", "--design", path(&out.join("design.json")), "--replicates", "3", "--seed", "9", "--out", path(&again)]);
    assert_eq!(
        std::fs::read(out.join("replicate_002.csv")).unwrap(),
        std::fs::read(again.join("replicate_002.csv")).unwrap()
    );
}

#[test]
fn simulated_data_feeds_fit() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("design.json");
    std::fs::write(&design, trivial_design().to_string()).unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--design", path(&design), "--replicates", "1", "--out", path(&sim)]);
    let (data, graph) = (sim.join("replicate_001.csv"), sim.join("graph.txt"));
    let fit = dir.path().join("fit");
    let mut args = vec![
        "fit", "--data", path(&data), "--graph", path(&graph), "--cutpoints", "3", "--h", "1", "--out", path(&fit),
    ];
    args.extend(QUICK);
    ok(&args);
    let clusters = std::fs::read_to_string(fit.join("clusters.csv")).unwrap();
    assert_eq!(clusters, "region,label\na,1\nb,1\nc,2\nd,2\n");
}

#[test]
fn evaluate_trivial_design() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("design.json");
    std::fs::write(&design, trivial_design().to_string()).unwrap();
    let out = dir.path().join("eval");
    let mut args = vec![
        "evaluate", "--design", path(&design), "--replicates", "3", "--h-grid", "0,1,2", "--out", path(&out),
    ];
    args.extend(QUICK);
    ok(&args);

    let eval = read_json(&out.join("evaluation.json"));
    let errors = schema_errors("evaluation.schema.json", &eval);
    assert!(errors.is_empty(), "{errors:?}");
    assert_eq!(eval["replicates_completed"], 3);
    assert_eq!(eval["true_clusters"], 2);
    let methods = eval["methods"].as_array().unwrap();
    assert_eq!(methods.len(), 2);
    assert!(methods.iter().all(|m| m["p_true_k"].as_f64().unwrap() >= 0.5));

    let per_h = std::fs::read_to_string(out.join("per_h.csv")).unwrap();
    assert_eq!(per_h.lines().count(), 4);
    let selected: u64 = per_h.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(selected, 3);
    assert_eq!(std::fs::read_to_string(out.join("replicates.csv")).unwrap().lines().count(), 4);
    let bias = std::fs::read_to_string(out.join("bias.csv")).unwrap();
    assert_eq!(bias.lines().count(), 1 + 2 * 5);
    let hist = std::fs::read_to_string(out.join("k_hat.csv")).unwrap();
    let total: u64 = hist.lines().skip(1).filter(|l| l.starts_with("selected")).map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 3);
}

#[test]
fn evaluate_without_zero_on_grid_omits_crp() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("design.json");
    std::fs::write(&design, trivial_design().to_string()).unwrap();
    let out = dir.path().join("eval");
    let mut args = vec!["evaluate", "--design", path(&design), "--replicates", "2", "--h-grid", "1", "--out", path(&out)];
    args.extend(QUICK);
    ok(&args);
    let eval = read_json(&out.join("evaluation.json"));
    assert_eq!(eval["methods"].as_array().unwrap().len(), 1);
}

#[test]
fn malformed_design_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("design.json");
    let mut d = trivial_design();
    d["true_labels"] = json!([0, 1, 1, 2]);
    std::fs::write(&design, d.to_string()).unwrap();
    let out = dir.path().join("o");
    let res = gwcrp(&["simulate", "--design", path(&design), "--out", path(&out)]);
    assert_eq!(res.status.code(), Some(2));
}
