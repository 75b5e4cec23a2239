use std::path::Path;
use std::process::{Command, Output};

fn sewave(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sewave"))
        .args(args)
        .current_dir(dir)
        .env_remove("SEWAVE_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sewave(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(sewave(dir.path(), &["--version"]).status.code(), Some(0));
    assert_eq!(sewave(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(sewave(dir.path(), &["synth", "--length", "10"]).status.code(), Some(1));
}

#[test]
fn invalid_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = sewave(dir.path(), &["synth", "--hurst", "1.2", "--length", "100", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let missing = sewave(dir.path(), &["collapse", "--in", "nope.csv", "--out", "c.json"]);
    assert_eq!(missing.status.code(), Some(1));
    let nothing = sewave(dir.path(), &["verify", "--out", "v.json"]);
    assert_eq!(nothing.status.code(), Some(1));
}

#[test]
fn synth_then_collapse_and_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&sewave(d, &["synth", "--hurst", "0.7", "--length", "16384", "--seed", "3", "--out", "x.csv"]));
    let text = std::fs::read_to_string(d.join("x.csv")).unwrap();
    assert!(text.lines().count() >= 16384);

    ok(&sewave(d, &["collapse", "--in", "x.csv", "--out", "c.json"]));
    let c: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("c.json")).unwrap()).unwrap();
    let h = c["h_star"].as_f64().unwrap();
    assert!((h - 0.7).abs() < 0.1, "H* {h}");

    ok(&sewave(d, &["spectrum", "--in", "x.csv", "--hurst", "0.7", "--out", "s.json"]));
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("s.json")).unwrap()).unwrap();
    let beta = s["beta_hat"].as_f64().unwrap();
    assert!((beta - 0.4).abs() < 0.15, "beta {beta}");
}

#[test]
fn out_dir_env_resolves_relative_paths() {
    let work = tempfile::tempdir().unwrap();
    let target = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sewave"))
        .args(["synth", "--hurst", "0.5", "--length", "256", "--out", "sub/w.csv"])
        .current_dir(work.path())
        .env("SEWAVE_OUT_DIR", target.path())
        .output()
        .unwrap();
    ok(&out);
    assert!(target.path().join("sub/w.csv").exists());
    assert!(!work.path().join("sub/w.csv").exists());
}

#[test]
fn verify_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&sewave(
        dir.path(),
        &["verify", "--prop1", "--corollary1", "--trials", "3", "--out", "v.json"],
    ));
    assert!(stdout.contains("prop1: max residual 0e0"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("v.json")).unwrap()).unwrap();
    assert!(v["corollary1"]["tied"]["max_abs_residual"].as_f64().unwrap() <= 1e-12);
}

const SMALL_CONFIG: &str = r#"{
  "data": { "source": "synthetic", "n_tickers": 2, "n_obs": 900, "h_min": 0.7, "h_max": 0.7, "seed": 1 },
  "model": { "depth": 2, "n_filters": 4 },
  "train": { "epochs": 1, "horizons": [1, 5], "window_len": 64, "test_split": 200 }
}"#;

#[test]
fn train_evaluate_report_round() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), SMALL_CONFIG).unwrap();
    ok(&sewave(d, &["train", "--config", "cfg.json", "--dest", "models"]));
    let model = d.join("models/se_wavenet_full_seed0.json");
    assert!(model.exists());

    let md = ok(&sewave(
        d,
        &["evaluate", "--config", "cfg.json", "--dest", "eval", "--models", model.to_str().unwrap()],
    ));
    assert!(md.contains("IID Gaussian") && md.contains("GARCH(1,1)"));
    for f in ["report.json", "cells.csv", "report.md"] {
        assert!(d.join("eval").join(f).exists());
    }

    ok(&sewave(d, &["report", "--in", "eval/report.json", "--format", "csv", "--out", "again.csv"]));
    let a = std::fs::read_to_string(d.join("again.csv")).unwrap();
    let b = std::fs::read_to_string(d.join("eval/cells.csv")).unwrap();
    assert_eq!(a, b);

    let bad = sewave(d, &["train", "--config", "cfg.json", "--variant", "no_such_variant"]);
    assert_eq!(bad.status.code(), Some(1));
}
