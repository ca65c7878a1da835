use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = r#"{
  "name": "tiny",
  "datasets": {"d": {"kind": "synthetic", "seed": 3, "n_train": 60, "n_test": 30,
                     "dims": [1, 4, 4], "class_count": 3, "noise": 0.3}},
  "models": {"lin": {"architecture": {"kind": "linear_softmax"}, "input_shape": [1, 4, 4], "class_count": 3}},
  "configs": {"c": {"epochs": 3, "batch_size": 10, "warmup_epochs": 1}},
  "plans": [
    {"name": "init", "model": "lin", "config": "c", "dataset": "d", "varied": ["param_init"], "R": 3},
    {"name": "sweep", "model": "lin", "config": "c", "dataset": "d", "varied": ["data_shuffle"], "R": 2, "onset": [0, 2]}
  ],
  "options": {"bootstrap_reps": 50, "tta": [{"flip": true, "crop": false}]}
}"#;

fn varlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varlab"))
        .args(args)
        .arg("--out")
        .arg(dir.join("out"))
        .env_remove("VARLAB_STORE")
        .current_dir(dir)
        .output()
        .unwrap()
}

fn write_experiment(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn last_json_line(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(out.stderr.trim_ascii())
        .unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn default_experiment_plans_seven_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let exp = concat!(env!("CARGO_MANIFEST_DIR"), "/../../experiments/default.json");
    let out = varlab(dir.path(), &["plan", "--experiment", exp]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let plan: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(plan.as_array().unwrap().len(), 7);
}

#[test]
fn second_run_trains_nothing_and_outputs_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let exp = write_experiment(dir.path(), TINY);
    let first = varlab(dir.path(), &["run", "--experiment", &exp]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    // Replicate 0 of `init` and of `sweep@onset0` is the same all-baseline run.
    assert_eq!(last_json_line(&first)["new_runs"], 6);

    let again = varlab(dir.path(), &["run", "--experiment", &exp, "--resume"]);
    assert!(again.status.success());
    let summary = last_json_line(&again);
    assert_eq!(summary["new_runs"], 0);
    assert_eq!(summary["reused"], 7);

    let analyze = varlab(dir.path(), &["analyze", "--experiment", &exp]);
    assert!(analyze.status.success(), "{}", String::from_utf8_lossy(&analyze.stderr));
    let csv = String::from_utf8(analyze.stdout).unwrap();
    assert!(csv.starts_with("condition,runs,"));
    assert!(csv.contains("\ninit+tta:flip,3,"));
    assert!(dir.path().join("out/reports/init.json").exists());

    let report = varlab(dir.path(), &["report", "--experiment", &exp]);
    assert!(report.status.success());
    assert_eq!(fs::read_to_string(dir.path().join("out/report.csv")).unwrap(), csv);

    let plot = varlab(dir.path(), &["plot", "--experiment", &exp]);
    assert!(plot.status.success(), "{}", String::from_utf8_lossy(&plot.stderr));
    for f in ["trace_init.svg", "trace_sweep@onset2.svg", "onset.svg"] {
        let svg = fs::read_to_string(dir.path().join("out/plots").join(f)).unwrap();
        assert!(svg.starts_with("<svg"), "{f}");
    }
}

#[test]
fn analyzing_a_single_replicate_names_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let exp = write_experiment(dir.path(), &TINY.replace(r#""R": 3"#, r#""R": 1"#));
    for cmd in ["run", "analyze"] {
        let out = varlab(dir.path(), &[cmd, "--experiment", &exp]);
        assert_eq!(out.status.code(), Some(1));
        let err = stderr_json(&out);
        assert_eq!(err["error"], "plan");
        assert!(err["message"].as_str().unwrap().contains("`init`"), "{err}");
    }
}

#[test]
fn analyze_before_run_is_a_plan_error() {
    let dir = tempfile::tempdir().unwrap();
    let exp = write_experiment(dir.path(), TINY);
    let out = varlab(dir.path(), &["analyze", "--experiment", &exp]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "plan");
}

#[test]
fn bad_arguments_are_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = varlab(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let out = varlab(dir.path(), &["plan"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("--experiment"));

    let exp = write_experiment(dir.path(), &TINY.replace(r#""bootstrap_reps""#, r#""bootstrap""#));
    let out = varlab(dir.path(), &["plan", "--experiment", &exp]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("bootstrap"));
}
