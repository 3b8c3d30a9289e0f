use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn factorsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_factorsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TWO_NODE: &str = r#"{
  "variables": [
    {"id": 0, "name": "A", "cardinality": 2},
    {"id": 1, "name": "B", "cardinality": 2}
  ],
  "parents": [[], [0]],
  "cpts": [[0.5, 0.5], [0.9, 0.1, 0.2, 0.8]],
  "query": 0,
  "evidence": [{"var": 1, "value": 0}]
}"#;

#[test]
fn gen_is_deterministic_and_valid() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for f in [&a, &b] {
        let o = factorsim(&["gen", "--seed", "1", "--nodes", "10..10", "--out", p(f)]);
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let o = factorsim(&["validate", p(&a)]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("ok: 10 nodes"));
}

#[test]
fn bad_range_is_usage_error() {
    let o = factorsim(&["gen", "--seed", "1", "--nodes", "5..4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("5..4"));
}

#[test]
fn query_two_node_bayes() {
    let dir = TempDir::new().unwrap();
    let net = dir.path().join("bayes.json");
    std::fs::write(&net, TWO_NODE).unwrap();
    let o = factorsim(&["query", p(&net), "--check-oracle"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("A=0\t0.8181818182"), "{out}");
    assert!(out.contains("A=1\t0.1818181818"), "{out}");
    let dev: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("oracle max abs deviation "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(dev < 1e-9);
}

#[test]
fn root_query_prints_prior() {
    let dir = TempDir::new().unwrap();
    let net = dir.path().join("prior.json");
    std::fs::write(&net, TWO_NODE.replace(r#"[{"var": 1, "value": 0}]"#, "[]")).unwrap();
    let out = stdout(&factorsim(&["query", p(&net)]));
    assert!(out.contains("A=0\t0.5000000000"), "{out}");
}

#[test]
fn oracle_check_on_seeded_nets() {
    let dir = TempDir::new().unwrap();
    for seed in 0..50 {
        let net = dir.path().join(format!("n{seed}.json"));
        let seed = seed.to_string();
        let o = factorsim(&["gen", "--seed", &seed, "--nodes", "4..12", "--obs", "1..4", "--out", p(&net)]);
        assert!(o.status.success());
        let out = stdout(&factorsim(&["query", p(&net), "--check-oracle"]));
        let dev: f64 = out
            .lines()
            .find_map(|l| l.strip_prefix("oracle max abs deviation "))
            .unwrap()
            .parse()
            .unwrap();
        assert!(dev < 1e-9, "seed {seed}: {dev}");
    }
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let garbled = dir.path().join("garbled.json");
    std::fs::write(&garbled, "{ \"variables\": [").unwrap();
    assert_eq!(factorsim(&["validate", p(&garbled)]).status.code(), Some(3));

    let invalid = dir.path().join("invalid.json");
    std::fs::write(&invalid, TWO_NODE.replace("[0.9, 0.1, 0.2, 0.8]", "[0.9, 0.2, 0.2, 0.8]")).unwrap();
    let o = factorsim(&["validate", p(&invalid)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row-sum"));

    let net = dir.path().join("bayes.json");
    std::fs::write(&net, TWO_NODE).unwrap();
    assert_eq!(factorsim(&["plan", p(&net), "--heuristic", "spi"]).status.code(), Some(2));
    assert_eq!(factorsim(&["simulate", p(&net), "--procs", "1000"]).status.code(), Some(2));

    let machine = dir.path().join("m.toml");
    std::fs::write(&machine, "alpha = \"fast\"\n").unwrap();
    assert_eq!(factorsim(&["simulate", p(&net), "--machine", p(&machine)]).status.code(), Some(3));

    let missing = dir.path().join("missing.json");
    assert_eq!(factorsim(&["validate", p(&missing)]).status.code(), Some(1));
}

#[test]
fn query_refuses_oversized_products() {
    let dir = TempDir::new().unwrap();
    let net = dir.path().join("dense.json");
    let o = factorsim(&["gen", "--seed", "1", "--nodes", "100..100", "--arcs", "5..5", "--obs", "10..10", "--out", p(&net)]);
    assert!(o.status.success());
    let o = factorsim(&["query", p(&net)]);
    assert_eq!(o.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&o.stderr).contains("above the cap of 33554432"));
}

#[test]
fn plan_outputs() {
    let dir = TempDir::new().unwrap();
    let single = dir.path().join("single.json");
    std::fs::write(
        &single,
        r#"{"variables": [{"id": 0, "name": "A", "cardinality": 2}], "parents": [[]],
            "cpts": [[0.25, 0.75]], "query": 0, "evidence": []}"#,
    )
    .unwrap();
    let tree = dir.path().join("t.json");
    let o = factorsim(&["plan", p(&single), "--out", p(&tree)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("0 products"));

    let chain = dir.path().join("chain.json");
    std::fs::write(
        &chain,
        r#"{"variables": [{"id": 0, "name": "A", "cardinality": 2}, {"id": 1, "name": "B", "cardinality": 2},
                          {"id": 2, "name": "C", "cardinality": 2}],
            "parents": [[], [0], [1]],
            "cpts": [[0.6, 0.4], [0.7, 0.3, 0.2, 0.8], [0.9, 0.1, 0.5, 0.5]],
            "query": 2, "evidence": []}"#,
    )
    .unwrap();
    let o = factorsim(&["plan", p(&chain), "--heuristic", "chain"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    // Leaves 0..3, then ((0 x 1) x 2).
    assert_eq!(v["nodes"][3]["left"], 0);
    assert_eq!(v["nodes"][3]["right"], 1);
    assert_eq!(v["nodes"][4]["left"], 3);
    assert_eq!(v["nodes"][4]["right"], 2);
    assert_eq!(v["root"], 4);
}

#[test]
fn simulate_net_and_tree() {
    let dir = TempDir::new().unwrap();
    let net = dir.path().join("net.json");
    assert!(factorsim(&["gen", "--seed", "7", "--nodes", "12..12", "--out", p(&net)]).status.success());
    let out = stdout(&factorsim(&["simulate", p(&net)]));
    for h in ["set-factoring", "set-factoring-c", "chain"] {
        assert!(out.contains(&format!("Test results for {h}\n")), "{out}");
    }
    // This net stays below the default grainsize: no speedup.
    let row = out.lines().nth(2).unwrap();
    let cells: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(cells[8], "1.0", "{row}");

    let tree = dir.path().join("tree.json");
    assert!(factorsim(&["plan", p(&net), "--heuristic", "chain", "--out", p(&tree)]).status.success());
    let out = stdout(&factorsim(&["simulate", p(&tree), "--heuristic", "chain"]));
    assert!(out.contains("Test results for chain\n"), "{out}");
}

#[test]
fn experiment_writes_tables() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let o = factorsim(&["experiment", "--nets", "4", "--nodes", "10..30", "--seed", "9", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = std::fs::read_to_string(out.join("results_set-factoring.csv")).unwrap();
    assert_eq!(results.lines().count(), 5);
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["master_seed"], 9);
    assert!(meta["version"].is_string());
    assert!(std::fs::read_to_string(out.join("tables.txt")).unwrap().contains("mem/Dist-mem"));
}

#[test]
fn zero_overhead_saturated_tree() {
    // One product of {0..10} with {0..10}, summing out 1..10; 2048 multiplies.
    let vars: Vec<String> = (0..11).map(|v| format!("[{v}, 2]")).collect();
    let scope = format!("[{}]", vars.join(", "));
    let tree = format!(
        r#"{{"query": 0, "root": 2, "nodes": [
            {{"kind": "leaf", "factor": 0, "scope": {scope}}},
            {{"kind": "leaf", "factor": 1, "scope": {scope}}},
            {{"kind": "product", "left": 0, "right": 1, "sum_out": [1,2,3,4,5,6,7,8,9,10], "scope": [[0, 2]]}}
        ]}}"#
    );
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("tree.json");
    std::fs::write(&path, tree).unwrap();
    let machine = dir.path().join("zero.toml");
    std::fs::write(&machine, "c_st = 0.0\nc_b = 0.0\ng_min = 1\n").unwrap();
    let out = stdout(&factorsim(&["simulate", p(&path), "--machine", p(&machine), "--procs", "2"]));
    let row: Vec<&str> = out.lines().nth(2).unwrap().split_whitespace().collect();
    // #, dm, md, dd, cm-cst, cp-cst, cp/cm, ttl-cst, r-spdp, a-spdp, md-all, n-u, eff
    assert_eq!(row[8], "2.0", "{out}");
    assert_eq!(row[11], "2", "{out}");
    assert_eq!(row[12], "1.000", "{out}");
    let (dm, md): (f64, f64) = (row[1].parse().unwrap(), row[2].parse().unwrap());
    assert_eq!(row[3], format!("{:.2}", (dm - md) / dm));
}
