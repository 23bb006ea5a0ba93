use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtreelab")).args(args).current_dir(fixtures()).output().unwrap()
}

fn report(args: &[&str]) -> Value {
    let out = run(args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn text(args: &[&str]) -> String {
    let out = run(args);
    assert_eq!(out.status.code(), Some(0));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn member_negative_verdict_exits_zero() {
    let r = report(&["group", "member", "--sub", "a,babb", "--word", "b"]);
    assert_eq!(r["result"]["member"], Value::Bool(false));
    let r = report(&["group", "member", "--sub", "a,babb", "--word", "babbA"]);
    assert_eq!(r["result"]["member"], Value::Bool(true));
    assert_eq!(r["result"]["in_basis"], "bA");
}

#[test]
fn spine_distance_is_one() {
    let r = report(&["cex", "spine", "--k", "5"]);
    assert_eq!(r["result"]["spine"]["distance"], "1/1");
    let r = report(&["cex", "spine", "3"]);
    assert_eq!(r["result"]["spine"]["distance"], "1/1");
}

#[test]
fn golden_run_is_pure_surface() {
    let r = report(&["isosys", "run", "golden.json", "--max-steps", "100"]);
    assert_eq!(r["result"]["machine"]["status"], "PURE");
    assert_eq!(r["result"]["classification"]["kind"], "SURFACE");
}

#[test]
fn report_echoes_command_and_budgets() {
    let r = report(&["isosys", "orbit", "golden.json", "--x", "0", "--orbit-budget", "50"]);
    assert_eq!(r["command"][0], "isosys");
    assert_eq!(r["budgets"]["orbit_budget"], 50);
    assert_eq!(r["budgets"]["max_steps"], 100);
    assert_eq!(r["budgets"]["max_len"], 10);
    assert_eq!(r["budgets"]["seed"], 0);
    assert_eq!(r["result"]["size"], 50);
    assert!(r.get("timing_ms").is_none());
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["isosys", "run", "missing.json"]).status.code(), Some(1));
    assert_eq!(run(&["group", "member", "--sub", "a,b?", "--word", "a"]).status.code(), Some(1));
    assert_eq!(run(&["cex", "spine"]).status.code(), Some(1));
    assert_eq!(run(&["cex", "chain", "3", "--dot"]).status.code(), Some(1));
    assert_eq!(run(&["cex", "spine", "2", "--max-steps", "0"]).status.code(), Some(1));
    assert_eq!(run(&["cex", "chain", "65"]).status.code(), Some(2));
    assert_eq!(run(&["isosys", "run", "golden.json", "--max-steps", "1"]).status.code(), Some(0));
    assert_eq!(run(&["isosys", "run", "rational.json", "--orbit-budget", "2"]).status.code(), Some(0));
    assert_eq!(run(&["gog", "scott", "broken_pipeline.json"]).status.code(), Some(0));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_json_reports_position() {
    let dir = std::env::temp_dir().join(format!("rtreelab-bad-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.json");
    std::fs::write(&path, "{\"D\": [[\"0\", \"1\"]],\n \"maps\": [}").unwrap();
    let out = run(&["isosys", "profile", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"]["message"].as_str().unwrap().contains("line 2"));
}

#[test]
fn broken_pipeline_names_witness() {
    let r = report(&["gog", "scott", "broken_pipeline.json"]);
    assert_eq!(r["result"]["verdict"], "MONOTONICITY_VIOLATION");
    assert_eq!(r["result"]["witness"], "b");
}

fn dot_counts(dot: &str) -> (usize, usize) {
    let edges = dot.lines().filter(|l| l.contains("->") || l.contains(" -- ")).count();
    let nodes = dot
        .lines()
        .map(str::trim)
        .filter(|l| !l.contains("->") && !l.contains(" -- ") && l.ends_with("];") && !l.starts_with("node"))
        .count();
    (nodes, edges)
}

#[test]
fn dot_exports() {
    let one_loop = text(&["group", "fold", "--sub", "a", "--dot"]);
    assert_eq!(dot_counts(&one_loop), (1, 1));
    assert!(one_loop.contains("label=\"a\""));
    assert_eq!(dot_counts(&text(&["tree", "skeleton", "tripod.json", "--dot"])), (4, 3));
    let gamma = text(&["cex", "gamma", "2", "--dot"]);
    assert_eq!(dot_counts(&gamma), (4, 3));
    assert!(gamma.contains("M1: <a,babb>"));
}

#[test]
fn echoed_command_replays() {
    let first = report(&["cex", "lengths", "b", "c", "3"]);
    let argv: Vec<String> = first["command"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    let args: Vec<&str> = argv.iter().map(String::as_str).collect();
    assert_eq!(report(&args), first);
    assert_eq!(first["result"]["lengths"]["lengths"], serde_json::json!(["2/1", "2/1", "2/1", "2/1"]));
}
