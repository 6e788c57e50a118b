//! End-to-end runs of the `skillbank` binary on the scripted fixture.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn skillbank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skillbank"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn config_path() -> String {
    common::fixtures().join("e2e/config.yaml").display().to_string()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.trim_start().starts_with('{')).unwrap_or_else(|| panic!("no JSON on stderr: {text}"));
    serde_json::from_str(line).expect("stderr JSON")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn accumulate(run: &Path) {
    let out = skillbank(&["accumulate", "--config", &config_path(), "--run-dir", path(run)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn accumulate_infer_eval_round() {
    let run = tempfile::tempdir().unwrap();
    accumulate(run.path());
    let summary: Value = serde_json::from_slice(&skillbank(&["kb", "inspect", path(&run.path().join("kb"))]).stdout).unwrap();
    assert_eq!(summary["experiences"], 3);
    assert_eq!(summary["skill"]["version"], "4.0.0");

    let out = skillbank(&["infer", "--config", &config_path(), "--run-dir", path(run.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.path().join("config.yaml").is_file());

    let out = skillbank(&["eval", "--run-dir", path(run.path())]);
    assert!(out.status.success());
    let table = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(table.contains("pass@2"), "{table}");
    let report: Value = serde_json::from_str(&fs::read_to_string(run.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass_at_n"], 1.0);
    assert_eq!(report["tasks"], 3);
    // One of the two France rollouts answers wrongly by construction.
    assert!((report["average_at_n"].as_f64().unwrap() - 5.0 / 6.0).abs() < 1e-12);
    assert_eq!(report["tool_usage"]["code_interpreter"], 1.0);

    // Re-running eval is byte-for-byte idempotent.
    let first = fs::read(run.path().join("report.json")).unwrap();
    let again = skillbank(&["eval", "--run-dir", path(run.path())]);
    assert_eq!(again.stdout, out.stdout);
    assert_eq!(fs::read(run.path().join("report.json")).unwrap(), first);
}

#[test]
fn eval_regrades_when_asked() {
    let run = tempfile::tempdir().unwrap();
    let out = skillbank(&["infer", "--config", &config_path(), "--run-dir", path(run.path()), "--no-knowledge"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = skillbank(&["eval", "--run-dir", path(run.path()), "--grader", "exact_normalized"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&fs::read(run.path().join("report.json")).unwrap()).unwrap();
    // "Blue" normalizes to "blue", so the regrade agrees with containment here.
    assert_eq!(report["pass_at_n"], 1.0);
}

#[test]
fn knowledge_changes_only_the_first_user_message() {
    let run = tempfile::tempdir().unwrap();
    accumulate(run.path());
    let with_kb = run.path().join("with");
    let without = run.path().join("without");
    let kb_dir = run.path().join("kb");
    let copy = tempfile::tempdir().unwrap();
    for name in ["config.yaml", "tasks.jsonl", "exec.yaml", "kb.yaml"] {
        fs::copy(common::fixtures().join("e2e").join(name), copy.path().join(name)).unwrap();
    }
    let config_file = copy.path().join("config.yaml");
    let config_text = fs::read_to_string(&config_file).unwrap();
    fs::write(&config_file, format!("{config_text}kb_dir: {}\n", kb_dir.display())).unwrap();
    let a = skillbank(&["infer", "--config", path(&config_file), "--run-dir", path(&with_kb)]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = skillbank(&["infer", "--config", &config_path(), "--run-dir", path(&without), "--no-knowledge"]);
    assert!(b.status.success());

    let mut compared = 0;
    for (rel, bytes) in common::tree(&with_kb) {
        if !rel.ends_with("transcript.json") {
            continue;
        }
        let x: Vec<Value> = serde_json::from_slice(&bytes).unwrap();
        let y: Vec<Value> = serde_json::from_slice(&fs::read(without.join(&rel)).unwrap()).unwrap();
        assert_eq!(x.len(), y.len(), "{rel:?}");
        assert_eq!(x[0], y[0], "system prompt differs in {rel:?}");
        assert_ne!(x[1], y[1], "knowledge did not reach the prompt in {rel:?}");
        assert_eq!(x[2..], y[2..], "{rel:?} diverged after the prompt");
        compared += 1;
    }
    assert_eq!(compared, 6);
    let usage: Value = serde_json::from_slice(&fs::read(with_kb.join("task-t1/usage.json")).unwrap()).unwrap();
    assert!(!usage["retrieved_ids"].as_array().unwrap().is_empty());
}

#[test]
fn rollouts_and_grader_flags_override_config() {
    let run = tempfile::tempdir().unwrap();
    let out = skillbank(&[
        "infer", "--config", &config_path(), "--run-dir", path(run.path()), "--no-knowledge", "--rollouts", "1", "--grader",
        "exact_normalized",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["total_rollouts"], 3);
    let echo = fs::read_to_string(run.path().join("config.yaml")).unwrap();
    assert!(echo.contains("rollouts: 1"), "{echo}");
    assert!(echo.contains("grader: exact_normalized"), "{echo}");
}

#[test]
fn kb_validate_rejects_overlong_entry() {
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb");
    fs::create_dir_all(&kb).unwrap();
    let long = vec!["word"; 70].join(" ");
    let entries = serde_json::json!([
        {"id": "E0", "text": "When a chart has two axes, read both legends first.", "created_at": 0},
        {"id": "E1", "text": long, "created_at": 1}
    ]);
    fs::write(kb.join("experiences.json"), serde_json::to_string_pretty(&entries).unwrap()).unwrap();
    let out = skillbank(&["kb", "validate", path(&kb)]);
    assert!(!out.status.success());
    let err = stderr_json(&out);
    assert_eq!(err["error"], "invariant_violation");
    assert!(err["violations"].to_string().contains("E1"), "{err}");

    let good = tempfile::tempdir().unwrap();
    accumulate(good.path());
    let out = skillbank(&["kb", "validate", path(&good.path().join("kb")), "--config", &config_path()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.yaml");
    fs::write(&bad, "foo: 1\n").unwrap();
    let out = skillbank(&["accumulate", "--config", path(&bad)]);
    assert!(!out.status.success());
    assert_eq!(stderr_json(&out)["error"], "unknown_key");

    fs::write(&bad, "theta_sim: 1.5\n").unwrap();
    let out = skillbank(&["accumulate", "--config", path(&bad)]);
    assert_eq!(stderr_json(&out)["error"], "type_error");

    let out = skillbank(&["infer", "--config", &config_path(), "--run-dir", path(&dir.path().join("fresh"))]);
    assert!(!out.status.success());
    assert_eq!(stderr_json(&out)["error"], "missing_knowledge_base");
}
