use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const ADEQUATE: &str = "FINAL RESULT: STRUCTURALLY ADEQUATE";

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data")
        .join(rel)
}

fn masse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_masse"))
        .args(args)
        .env_remove("MASSE_API_KEY")
        .output()
        .unwrap()
}

fn last_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .last()
        .unwrap_or_default()
        .to_string()
}

fn golden_problem() -> String {
    data("golden/problem.txt").display().to_string()
}

fn run_into(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.display().to_string();
    let problem = golden_problem();
    let mut args = vec!["run", problem.as_str(), "--out", out.as_str()];
    args.extend_from_slice(extra);
    masse(&args)
}

#[test]
fn run_writes_outputs_and_ends_with_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("nested/out");
    let out = run_into(&out_dir, &[]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(last_line(&out), ADEQUATE);
    for f in [
        "trace.jsonl",
        "analysis_results.json",
        "internal_forces.json",
        "structural_model.json",
    ] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let trace = fs::read_to_string(out_dir.join("trace.jsonl")).unwrap();
    assert_eq!(
        trace,
        fs::read_to_string(data("golden/trace.jsonl")).unwrap()
    );
}

#[test]
fn rerunning_needs_force_and_reproduces_bytes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_into(dir.path(), &[]).status.code(), Some(0));
    let first: Vec<Vec<u8>> = [
        "trace.jsonl",
        "analysis_results.json",
        "internal_forces.json",
        "structural_model.json",
    ]
    .iter()
    .map(|f| fs::read(dir.path().join(f)).unwrap())
    .collect();

    let refused = run_into(dir.path(), &[]);
    assert_eq!(refused.status.code(), Some(3));
    assert!(last_line(&refused).starts_with("ERROR:"));

    let forced = run_into(dir.path(), &["--force"]);
    assert_eq!(forced.status.code(), Some(0));
    let second: Vec<Vec<u8>> = [
        "trace.jsonl",
        "analysis_results.json",
        "internal_forces.json",
        "structural_model.json",
    ]
    .iter()
    .map(|f| fs::read(dir.path().join(f)).unwrap())
    .collect();
    assert_eq!(first, second);
}

#[test]
fn scaled_capacities_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"capacity": {"capacity_scale": 0.1}}"#).unwrap();
    let out = run_into(
        &dir.path().join("out"),
        &["--config", config.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(last_line(&out), "FINAL RESULT: STRUCTURALLY INADEQUATE");
}

#[test]
fn pipeline_failures_exit_two_with_an_error_line() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("p.txt");
    let text = fs::read_to_string(data("golden/problem.txt")).unwrap();
    fs::write(&problem, text.replace(" located in Nanaimo, BC", "")).unwrap();
    let out_dir = dir.path().join("out");
    let out = masse(&[
        "run",
        problem.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let line = last_line(&out);
    assert!(
        line.starts_with("ERROR:") && line.contains("parse_error"),
        "{line}"
    );
    assert!(out_dir.join("trace.jsonl").is_file());
}

#[test]
fn usage_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let missing = masse(&[
        "run",
        "/nonexistent/problem.txt",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(last_line(&missing).starts_with("ERROR:"));
    assert_eq!(masse(&["run"]).status.code(), Some(3));
    assert_eq!(masse(&["frobnicate"]).status.code(), Some(3));
    let bad_config = dir.path().join("c.json");
    fs::write(&bad_config, r#"{"max_round": 2}"#).unwrap();
    let out = run_into(&out_dir, &["--config", bad_config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let remote = run_into(&out_dir, &["--backend", "remote"]);
    assert_eq!(remote.status.code(), Some(3));
}

#[test]
fn seismic_lookup_and_missing_city() {
    let out = masse(&["seismic", "--city", "Nanaimo, BC"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&last_line(&out)).unwrap();
    assert_eq!(doc["PGA"], 0.446);
    assert_eq!(doc["Sa_02"], 1.02);

    let out = masse(&["seismic", "--city", "Nowhere"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&last_line(&out)).unwrap();
    assert_eq!(doc["error"], "City not found");

    let out = masse(&[
        "seismic",
        "--city",
        "Nanaimo, BC",
        "--table",
        "/nonexistent.csv",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn fem_prints_the_envelope() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_into(dir.path(), &[]).status.code(), Some(0));
    let snapshot: Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("analysis_results.json")).unwrap(),
    )
    .unwrap();
    let loads = dir.path().join("loads.json");
    fs::write(&loads, snapshot["load_data"].to_string()).unwrap();
    let model = dir.path().join("structural_model.json");
    let forces = dir.path().join("fem_forces.json");
    let out = masse(&[
        "fem",
        model.to_str().unwrap(),
        loads.to_str().unwrap(),
        "--internal-forces",
        forces.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let env: Value = serde_json::from_str(&last_line(&out)).unwrap();
    let compression = env["beams"]["max_compression"].as_f64().unwrap();
    assert!((compression - 5.625).abs() / 5.625 < 0.05, "{compression}");
    assert!(forces.is_file());

    let custom = masse(&[
        "fem",
        model.to_str().unwrap(),
        loads.to_str().unwrap(),
        "--internal-forces",
        forces.to_str().unwrap(),
        "--force",
        "--combos",
        "both=seismic*1.0+live*1.0",
    ]);
    assert_eq!(custom.status.code(), Some(0));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"seismic": "no", "live": []}"#).unwrap();
    let out = masse(&[
        "fem",
        model.to_str().unwrap(),
        bad.to_str().unwrap(),
        "--force",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("load_data"));
}

#[test]
fn score_and_replay_the_golden_trace() {
    let trace = data("golden/trace.jsonl");
    let out = masse(&["score", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(last_line(&out), "SAAB 100 SDAB 100 LAB 100 MASEB 100");

    let out = masse(&["replay", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(last_line(&out), "snapshot identical");
}

#[test]
fn replay_detects_a_different_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let mut snapshot: Value =
        serde_json::from_str(&fs::read_to_string(data("golden/snapshot.json")).unwrap()).unwrap();
    snapshot["location"] = Value::from("Elsewhere");
    let path = dir.path().join("snap.json");
    fs::write(&path, snapshot.to_string()).unwrap();
    let trace = data("golden/trace.jsonl");
    let out = masse(&[
        "replay",
        trace.to_str().unwrap(),
        "--snapshot",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(last_line(&out).contains("location"));
}

#[test]
fn batch_runs_problems_in_parallel() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(data("golden/problem.txt")).unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    fs::write(&a, &text).unwrap();
    fs::write(&b, text.replace("1.00 kip (1000 lb)", "0.40 kip (400 lb)")).unwrap();
    let out_dir = dir.path().join("out");
    let out = masse(&[
        "batch",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], format!("a: {ADEQUATE}"));
    assert!(lines[1].starts_with("b: ERROR:"));
    assert!(out_dir.join("a/trace.jsonl").is_file());
    assert!(out_dir.join("b/trace.jsonl").is_file());
}
