use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn efe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_efe"))
        .args(args)
        .arg("--out")
        .arg(dir.join("out"))
        .env_remove("EFE_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap()
}

/// Data rows of a CSV, split into fields, after the version and header lines.
fn rows(text: &str) -> Vec<Vec<String>> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("#schema_version=1"));
    lines.next().expect("header");
    lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn default_verify_passes_every_check() {
    let dir = TempDir::new().unwrap();
    let out = efe(dir.path(), &["verify"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = read(dir.path(), "verify.csv");
    assert!(text.lines().nth(1).unwrap() == "check_name,seed,residual,tolerance,pass");
    let r = rows(&text);
    assert!(r.len() >= 200);
    assert!(r.iter().all(|f| f[4] == "true"));
}

#[test]
fn corrupted_prior_fails_verification() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"tmaze": {}}, "verify": {"oracle": false, "suite_seeds": 20}}"#,
    );
    let out = efe(
        dir.path(),
        &["verify", "--config", &cfg, "--corrupt-policy-prior"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("theorem_identity"));
    for f in rows(&read(dir.path(), "verify.csv")) {
        if f[0] == "theorem_identity" {
            assert_eq!(f[4], "false");
            assert!((f[2].parse::<f64>().unwrap() - 2f64.ln()).abs() < 1e-9);
        }
    }
}

#[test]
fn empty_config_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    for body in ["", "{}"] {
        let cfg = write_config(dir.path(), body);
        assert_eq!(
            efe(dir.path(), &["verify", "--config", &cfg]).status.code(),
            Some(2)
        );
    }
    assert_eq!(
        efe(dir.path(), &["plan", "--mode", "greedy"]).status.code(),
        Some(2)
    );
    let cfg = write_config(dir.path(), r#"{"model": {"file": "missing.json"}}"#);
    assert_eq!(
        efe(dir.path(), &["plan", "--config", &cfg]).status.code(),
        Some(2)
    );
}

#[test]
fn broken_model_file_names_the_row() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("model.json"),
        r#"{"schema_version": 1, "initial_state": [1.0, 0.0], "theta_prior": [1.0],
            "likelihood": [[[1.0, 0.0], [0.0, 1.0]]],
            "transition": [[[0.0, 1.0], [0.3, 0.3]]], "horizon": 1,
            "preference": {"fixed": {"mode": "per_step", "targets": [[0.0, 1.0]]}}}"#,
    )
    .unwrap();
    let cfg = write_config(dir.path(), r#"{"model": {"file": "model.json"}}"#);
    let out = efe(dir.path(), &["plan", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("model.json") && err.contains("transition") && err.contains("[0][1]"),
        "{err}"
    );
}

#[test]
fn tmaze_plan_orders_policies_by_mode() {
    let dir = TempDir::new().unwrap();
    assert!(efe(dir.path(), &["plan", "--mode", "full_efe"])
        .status
        .success());
    let full = rows(&read(dir.path(), "plan.csv"));
    assert!(full[0][1].starts_with("go_cue-go_"), "{:?}", full[0]);
    assert_ne!(full[0][1], "go_cue-go_cue");
    let g: Vec<f64> = full.iter().map(|f| f[5].parse().unwrap()).collect();
    assert!(g.windows(2).all(|w| w[0] <= w[1]));
    let q: f64 = full.iter().map(|f| f[8].parse::<f64>().unwrap()).sum();
    assert!((q - 1.0).abs() < 1e-9);

    assert!(efe(dir.path(), &["plan", "--mode", "kl_control"])
        .status
        .success());
    let kl = rows(&read(dir.path(), "plan.csv"));
    assert!(
        kl[0][1].starts_with("go_left") || kl[0][1].starts_with("go_right"),
        "{:?}",
        kl[0]
    );
}

#[test]
fn single_policy_model_has_one_certain_row() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("model.json"),
        r#"{"schema_version": 1, "initial_state": [1.0, 0.0], "theta_prior": [1.0],
            "likelihood": [[[1.0, 0.0], [0.0, 1.0]]],
            "transition": [[[0.0, 1.0], [0.0, 1.0]]], "horizon": 1,
            "preference": {"fixed": {"mode": "per_step", "targets": [[0.0, 1.0]]}}}"#,
    )
    .unwrap();
    let cfg = write_config(dir.path(), r#"{"model": {"file": "model.json"}}"#);
    assert!(efe(dir.path(), &["plan", "--config", &cfg])
        .status
        .success());
    let r = rows(&read(dir.path(), "plan.csv"));
    assert_eq!(r.len(), 1);
    assert_eq!(r[0][8].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn tmaze_episodes_all_reach_the_rewarding_arm() {
    let dir = TempDir::new().unwrap();
    let seeds: Vec<String> = (1..=100).map(|s| s.to_string()).collect();
    let mut args = vec!["run", "--mode", "full_efe"];
    for s in &seeds {
        args.extend(["--seed", s]);
    }
    let out = efe(dir.path(), &args);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout)
        .contains("100 episodes, 100 reached the preferred state"));
    let summary = rows(&read(dir.path(), "summary.csv"));
    assert_eq!(summary.len(), 100);
    assert!(summary.iter().all(|f| f[6] == "true"));
}

#[test]
fn deterministic_grid_reaches_the_goal() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"gridworld": {"width": 3, "height": 2, "goal": 5, "horizon": 3}},
            "mode": "kl_control", "seeds": [0, 1, 2, 3, 4, 5]}"#,
    );
    let out = efe(dir.path(), &["run", "--config", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in rows(&read(dir.path(), "summary.csv")) {
        assert_eq!(f[3], "5");
        assert_eq!(f[6], "true");
    }
}

#[test]
fn zero_steps_gives_an_empty_log() {
    let dir = TempDir::new().unwrap();
    let out = efe(dir.path(), &["run", "--steps", "0", "--seed", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let log: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "episode_seed4.json")).unwrap();
    assert_eq!(log["steps"].as_array().unwrap().len(), 0);
    assert!(rows(&read(dir.path(), "episode_seed4.csv")).is_empty());
}

#[test]
fn reruns_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [&a, &b] {
        let args = ["run", "--decision", "sample", "--seed", "7", "--seed", "8"];
        assert!(efe(dir.path(), &args).status.success());
        assert!(efe(dir.path(), &["plan", "--prior-variant", "normalized"])
            .status
            .success());
    }
    for name in [
        "episode_seed7.json",
        "episode_seed7.csv",
        "episode_seed8.json",
        "summary.csv",
        "plan.csv",
    ] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let target = dir.path().join("from_env");
    let status = Command::new(env!("CARGO_BIN_EXE_efe"))
        .args(["plan"])
        .env("EFE_OUT_DIR", &target)
        .current_dir(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(target.join("plan.csv").is_file());
}
