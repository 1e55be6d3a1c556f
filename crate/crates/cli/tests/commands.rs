use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn clinproj(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clinproj")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

const SMALL: &str = "
[synth]
n_patients = 24
[ml]
k = 2
[ml.gbt]
rounds = 20
";

const CLEAN: &str = "
[synth]
n_patients = 12
[corruption]
out_of_range = 0.0
rate_spike = 0.0
missing = 0.0
logical_pair = 0.0
";

#[test]
fn clean_cohort_needs_no_correction() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("clean.toml"), CLEAN).unwrap();
    let synth = ok_json(&clinproj(d, &["--config", "clean.toml", "synth", "--output", "cohort"]));
    assert_eq!(synth["corrupted_cells"], 0);
    ok_json(&clinproj(d, &["--config", "clean.toml", "preprocess", "--input", "cohort", "--output", "w.json"]));
    let proj = ok_json(&clinproj(d, &["--config", "clean.toml", "project", "--input", "w.json", "--output", "p.json"]));
    assert_eq!(proj["projection"]["corrected_cells"], 0);
    assert_eq!(proj["projection"]["total_phys_dist"], 0.0);
}

#[test]
fn commands_chain_and_eval_reports_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.toml"), SMALL).unwrap();
    let c = ["--config", "small.toml"];
    let run = |rest: &[&str]| ok_json(&clinproj(d, &[&c[..], rest].concat()));
    run(&["synth", "--output", "cohort"]);
    run(&["preprocess", "--input", "cohort", "--output", "w.json"]);
    let proj = run(&["project", "--input", "w.json", "--output", "p.json"]);
    assert!(proj["projection"]["corrected_cells"].as_u64().unwrap() > 0);

    let trust = run(&["trust", "--input", "p.json", "--output", "trust.psv"]);
    assert_eq!(trust["trust_stats"]["min"].as_array().unwrap().len(), 30);
    let table = std::fs::read_to_string(d.join("trust.psv")).unwrap();
    let header: Vec<&str> = table.lines().next().unwrap().split('|').collect();
    assert_eq!(header.len(), 4 + 30 * 6 + 30 + 30);
    assert!(header.contains(&"HR_trust") && header.contains(&"HR_physdist"));
    assert_eq!(table.lines().count(), proj["projection"]["windows"].as_u64().unwrap() as usize + 1);

    run(&["train", "--input", "p.json", "--output", "model"]);
    let eval = run(&["eval", "--input", "p.json", "--model", "model/model.json", "--sofa-baseline"]);
    assert_eq!(eval["scope"], "test_patients");
    for row in ["model", "sofa_baseline"] {
        let m = &eval["metrics"][row];
        let total: u64 = ["tp", "fp", "tn", "fn"].iter().map(|k| m[k].as_u64().unwrap()).sum();
        assert_eq!(total, eval["windows"].as_u64().unwrap());
    }
    run(&["predict", "--input", "p.json", "--model", "model/model.json", "--output", "preds.psv"]);
    let preds = std::fs::read_to_string(d.join("preds.psv")).unwrap();
    assert!(preds.starts_with("SubId|PatientId|WindowStart|Probability|Prediction\n"));

    let plain = run(&["train", "--input", "w.json", "--output", "plain", "--no-trust"]);
    let eval = run(&["eval", "--input", "w.json", "--model", "plain/model.json"]);
    assert_eq!(eval["model_hash"], plain["model_hash"]);
    assert!(eval["metrics"].get("sofa_baseline").is_none());
}

#[test]
fn e2e_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.toml"), SMALL).unwrap();
    for name in ["a.json", "b.json"] {
        let out = clinproj(d, &["--config", "small.toml", "e2e", "--seed", "7", "--output", name]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(d.join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.json")).unwrap());
    let report: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["manifest"]["seed"], 7);
    assert!(report["with_trust"]["metrics"]["auroc"].is_f64());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = |args: &[&str]| clinproj(d, args).status.code().unwrap();
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["--window", "3", "--stride", "3", "synth", "--output", "x"]), 1);
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["preprocess", "--input", "missing-dir", "--output", "w.json"]), 2);

    std::fs::write(d.join("small.toml"), SMALL).unwrap();
    assert_eq!(code(&["--config", "small.toml", "synth", "--output", "cohort"]), 0);
    assert_eq!(code(&["preprocess", "--input", "cohort", "--output", "w.json"]), 0);
    assert_eq!(code(&["project", "--node-budget", "0", "--input", "w.json", "--output", "p.json"]), 3);
    assert_eq!(code(&["train", "--input", "w.json", "--output", "m"]), 2);

    std::fs::write(d.join("tiny.toml"), "[synth]\nn_patients = 3\n").unwrap();
    assert_eq!(code(&["--config", "tiny.toml", "synth", "--output", "tiny"]), 0);
    assert_eq!(code(&["preprocess", "--input", "tiny", "--output", "t.json"]), 0);
    assert_eq!(code(&["train", "--no-trust", "--input", "t.json", "--output", "m"]), 4);
}
