use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_swing-pinn");

/// Small dataset and a short optimizer run so each case takes seconds.
const SMALL: &str = r#"{
  "dataset": { "n_trajectories": 3, "t_end": 2.0 },
  "n_u": 20,
  "n_f": 200,
  "train": { "max_iterations": 30, "log_every": 10 },
  "identify": { "n_trajectories": 2, "n_u": 20, "n_f": 100, "layers": [2, 6, 6, 1] }
}"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn swing-pinn")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["train", "--nu", "many"]).status.code(), Some(1));
    assert_eq!(run(&["train", "--layers", "2,0,1"]).status.code(), Some(1));
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{ "no_such_field": 1 }"#).unwrap();
    let out = run(&["generate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn generate_single_trajectory_and_rerun_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("one.json");
    std::fs::write(&cfg, r#"{ "dataset": { "n_trajectories": 1 } }"#).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["generate", "--config", s(&cfg), "--out", s(out), "--seed", "5"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = std::fs::read_to_string(a.join("dataset.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 201);
    assert!(csv.starts_with("p1,t,delta,omega\n0.08,0.0,0.1,0.1\n"));
    assert_eq!(csv, std::fs::read_to_string(b.join("dataset.csv")).unwrap());

    let manifest = json(&a.join("manifest.json"));
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["config"]["seed"], 5);
    assert_eq!(manifest["config"]["dataset"]["n_trajectories"], 1);
}

#[test]
fn train_without_dataset_fails_at_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["train", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset"));
}

#[test]
fn train_evaluate_predict_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = s(dir.path());
    assert!(run(&["generate", "--config", &cfg, "--out", out]).status.success());
    let o = run(&["train", "--config", &cfg, "--out", out, "--iters", "20", "--layers", "2,5,5,1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "checkpoint.json",
        "history.csv",
        "train_report.json",
        "eval.json",
        "trajectory_errors.csv",
        "plot_best.csv",
        "plot_worst.csv",
        "manifest.json",
    ] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let report = json(&dir.path().join("train_report.json"));
    assert_eq!(report["iterations"], 20);
    assert!(report["final"]["total"].as_f64().unwrap() <= report["initial"]["total"].as_f64().unwrap());
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["config"]["layers"], serde_json::json!([2, 5, 5, 1]));
    let history = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert!(history.starts_with("iteration,mse_u,mse_f,total\n"));
    let errors = std::fs::read_to_string(dir.path().join("trajectory_errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 4);

    // Query at a grid point agrees with the evaluation's plot data.
    let eval_dir = dir.path().join("eval");
    let o = run(&["evaluate", "--config", &cfg, "--out", s(&eval_dir), "--checkpoint", &format!("{out}/checkpoint.json"), "--data", &format!("{out}/dataset.csv")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let best_p1 = json(&eval_dir.join("eval.json"))["best_p1"].as_f64().unwrap();
    let plot = std::fs::read_to_string(eval_dir.join("plot_best.csv")).unwrap();
    let row: Vec<f64> = plot.lines().nth(8).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    let o = run(&["predict", "--config", &cfg, "--out", out, "--t", &row[0].to_string(), "--p1", &best_p1.to_string()]);
    assert!(o.status.success());
    let pred = json(&dir.path().join("prediction.json"));
    assert_eq!(pred["delta"].as_f64().unwrap(), row[1]);
    assert_eq!(pred["extrapolation"], false);
    let printed: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(printed, pred);

    // Outside the training box the flag is set and a warning printed.
    let o = run(&["predict", "--config", &cfg, "--out", out, "--t", "30", "--p1", "0.1"]);
    assert!(o.status.success());
    assert_eq!(json(&dir.path().join("prediction.json"))["extrapolation"], true);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));

    // Benchmark writes a timing report next to the reference figures.
    let bench_cfg = dir.path().join("bench.json");
    std::fs::write(&bench_cfg, r#"{ "benchmark": { "repetitions": 10, "queries_per_repetition": 10, "single_instant": 1.0 } }"#).unwrap();
    let o = run(&["benchmark", "--config", s(&bench_cfg), "--out", s(&dir.path().join("bench")), "--checkpoint", &format!("{out}/checkpoint.json")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let b = json(&dir.path().join("bench/benchmark.json"));
    assert_eq!(b["reference_grid_speedup"], 28.0);
    assert_eq!(b["reference_instant_speedup"], 87.0);
    assert!(b["surrogate_seconds_per_query"].as_f64().unwrap() > 0.0);
}

#[test]
fn malformed_checkpoint_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("checkpoint.json");
    std::fs::write(&ckpt, "{ not json").unwrap();
    let o = run(&["predict", "--out", s(dir.path()), "--checkpoint", s(&ckpt), "--t", "1", "--p1", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["benchmark", "--out", s(dir.path()), "--checkpoint", s(&dir.path().join("missing.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn identify_reports_every_pair_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("id.json");
    let mut config: Value = serde_json::from_str(SMALL).unwrap();
    config["identify"]["pairs"] = serde_json::json!([[0.2, 0.1], [0.3, 0.07]]);
    std::fs::write(&cfg, config.to_string()).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["identify", "--config", s(&cfg), "--out", s(out), "--iters", "15"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = std::fs::read_to_string(a.join("identify.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 2 + 1);
    assert_eq!(lines[0], "pair,m_true,d_true,m,d,m_rel_error,d_rel_error");
    assert!(lines[3].starts_with("average,"));
    assert_eq!(csv, std::fs::read_to_string(b.join("identify.csv")).unwrap());
    for k in 0..2 {
        assert!(a.join(format!("pair_{k:02}/checkpoint.json")).exists());
        let history = std::fs::read_to_string(a.join(format!("pair_{k:02}/history.csv"))).unwrap();
        assert!(history.starts_with("iteration,mse_u,mse_f,total,m,d\n"));
    }
}

#[test]
fn identify_from_truth_barely_moves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("id.json");
    let mut config: Value = serde_json::from_str(SMALL).unwrap();
    config["identify"]["pairs"] = serde_json::json!([[0.25, 0.1]]);
    std::fs::write(&cfg, config.to_string()).unwrap();
    let o = run(&["identify", "--config", s(&cfg), "--out", s(dir.path()), "--iters", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = json(&dir.path().join("identify.json"))["rows"].clone();
    // Five Adam steps of size 1e-3 move each parameter by at most 5e-3.
    assert!((rows[0]["m"].as_f64().unwrap() - 0.25).abs() <= 5e-3 + 1e-12);
    assert!((rows[0]["d"].as_f64().unwrap() - 0.1).abs() <= 5e-3 + 1e-12);
}
