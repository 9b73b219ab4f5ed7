use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn edgeac(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgeac")).arg("--out").arg(out).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn canonical_run_writes_chain_and_metrics_that_validate() {
    let dir = tempfile::tempdir().unwrap();
    let run = edgeac(dir.path(), &["run"]);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    assert!(stdout(&run).contains("seed=2021"));
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,value\n"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config_digest"].as_str().unwrap().len(), 64);

    let chain = dir.path().join("chain.jsonl");
    let ok = edgeac(dir.path(), &["validate", chain.to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(stdout(&ok).starts_with("VALID"));

    // Tamper with one nonce.
    let text = fs::read_to_string(&chain).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut block: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
    block["nonce"] = (block["nonce"].as_u64().unwrap() + 1).into();
    lines[1] = serde_json::to_string(&block).unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let rejected = edgeac(dir.path(), &["validate", bad.to_str().unwrap()]);
    assert_eq!(rejected.status.code(), Some(1));
    assert!(stderr(&rejected).contains("INVALID"));
}

#[test]
fn runs_are_reproducible_under_a_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(edgeac(a.path(), &["--seed", "11", "run"]).status.success());
    assert!(edgeac(b.path(), &["--seed", "11", "--format", "json", "run"]).status.success());
    let chain = |d: &Path| fs::read_to_string(d.join("chain.jsonl")).unwrap();
    assert_eq!(chain(a.path()), chain(b.path()));
    assert!(b.path().join("metrics.json").exists());
}

#[test]
fn init_writes_a_runnable_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let topology = dir.path().join("topology.json");
    fs::write(&topology, r#"{"nodes":[{"name":"m","role":"manager"},{"name":"e1","role":"edge"}]}"#).unwrap();
    let init = edgeac(dir.path(), &["--seed", "3", "init", topology.to_str().unwrap()]);
    assert_eq!(init.status.code(), Some(0), "{}", stderr(&init));
    assert!(stdout(&init).contains("e1"));
    let scenario = dir.path().join("scenario.json");
    let run = edgeac(dir.path(), &["run", scenario.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
}

#[test]
fn duplicate_node_ids_are_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let topology = dir.path().join("dup.json");
    fs::write(&topology, r#"{"nodes":[{"name":"e","role":"edge"},{"name":"e","role":"edge"}]}"#).unwrap();
    let out = edgeac(dir.path(), &["init", topology.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("duplicate_node"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(edgeac(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(edgeac(dir.path(), &["validate", "/no/such/chain.jsonl"]).status.code(), Some(2));
    let config = dir.path().join("c.json");
    fs::write(&config, r#"{"repetition": 3}"#).unwrap();
    assert_eq!(edgeac(dir.path(), &["--config", config.to_str().unwrap(), "bench-pow"]).status.code(), Some(2));
}

#[test]
fn bench_reports_carry_seed_and_digest() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.json");
    fs::write(&config, r#"{"n_bits":[4],"concurrency":[1],"blocks":4}"#).unwrap();
    let out = edgeac(dir.path(), &["--seed", "9", "--config", config.to_str().unwrap(), "--format", "json", "bench-pow"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("bench-pow.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 9);
    assert_eq!(report["config_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn talks_to_an_external_server() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let (addr, _task) = rt.block_on(edgeac_server::spawn(([127, 0, 0, 1], 0).into())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = edgeac(dir.path(), &["--server", &format!("http://{addr}"), "run"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let down = edgeac(dir.path(), &["--server", "http://127.0.0.1:9", "run"]);
    assert_eq!(down.status.code(), Some(1));
}
