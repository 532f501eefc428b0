use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kerrfb::config::ExperimentConfig;
use kerrfb::dynamics::SteadyStateMethod;
use tempfile::TempDir;

fn kerrfb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kerrfb"))
        .args(args)
        .env_remove("KERRFB_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> PathBuf {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    PathBuf::from(String::from_utf8(out.stdout.clone()).unwrap().trim())
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dims = (3, 10);
    cfg
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn trajectory_rows_follow_sampling() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let dir = ok(&kerrfb(&["openloop-trajectory", "--t-max", "0.5", "--out", out]));
    assert_eq!(dir, tmp.path().join("openloop-trajectory"));
    let meta = json(&dir.join("metadata.json"));
    let dt = meta["dt"].as_f64().unwrap();
    let every = ExperimentConfig::default().trajectory.sample_every as f64;
    let expected = (0.5 / (dt * every)).round() as usize + 1;
    let rows = csv_rows(&dir.join("trajectory.csv"));
    assert_eq!(rows[0][0], "time");
    assert!(rows[0].contains(&"n_b.re".to_string()));
    assert_eq!(rows.len() - 1, expected);
    let manifest = json(&dir.join("manifest.json"));
    assert_eq!(manifest["command"], "openloop-trajectory");
    assert_eq!(manifest["rng"], "chacha20/seed_from_u64");
    assert!(manifest["outputs"].as_array().unwrap().len() >= 4);
}

#[test]
fn invalid_horizon_exits_with_validation_code() {
    let tmp = TempDir::new().unwrap();
    let out = kerrfb(&["openloop-trajectory", "--t-max", "0.0", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_max"));
    assert!(!tmp.path().join("openloop-trajectory").exists());
    let out = kerrfb(&["phi-sweep", "--workers", "0", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_leaves_no_outputs() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.steady.method = SteadyStateMethod::LongTime;
    cfg.steady.long_time.t_max = 1e-3;
    cfg.steady.long_time.sample_every = 1;
    let config = write_config(tmp.path(), &cfg);
    let out = kerrfb(&["steady-state", "--config", &config, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!tmp.path().join("steady-state").exists());
}

#[test]
fn open_loop_trajectory_switches() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let switched = ["1", "2", "3"].iter().any(|seed| {
        let dir = ok(&kerrfb(&["openloop-trajectory", "--seed", seed, "--t-max", "30", "--out", out]));
        let s = json(&dir.join("switching.json"));
        s["n_transitions_up"].as_u64().unwrap() + s["n_transitions_down"].as_u64().unwrap() >= 1
    });
    assert!(switched);
}

#[test]
fn reruns_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let run = |d: &TempDir| ok(&kerrfb(&["openloop-trajectory", "--seed", "5", "--t-max", "2", "--out", d.path().to_str().unwrap()]));
    let (da, db) = (run(&a), run(&b));
    for f in ["trajectory.csv", "jumps.csv", "metadata.json", "switching.json"] {
        assert_eq!(std::fs::read(da.join(f)).unwrap(), std::fs::read(db.join(f)).unwrap(), "{f}");
    }
    let (ma, mb) = (json(&da.join("manifest.json")), json(&db.join("manifest.json")));
    assert_eq!(ma["outputs"], mb["outputs"]);
    assert_eq!(ma["config_hash"], mb["config_hash"]);
}

#[test]
fn output_directory_from_environment() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_kerrfb"))
        .args(["steady-state", "--loop", "static", "--phi", "0"])
        .env("KERRFB_OUTPUT_DIR", tmp.path())
        .output()
        .unwrap();
    let dir = ok(&out);
    assert_eq!(dir, tmp.path().join("steady-state"));
    assert_eq!(json(&dir.join("steady.json"))["effective_kappa"].as_f64(), Some(250.0));
}

#[test]
fn steady_states_of_each_loop() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let dir = ok(&kerrfb(&["steady-state", "--loop", "open", "--out", out]));
    let s = json(&dir.join("steady.json"));
    assert_eq!(s["bimodality"]["bistable"], true);
    assert_eq!(s["method"], "null-space");
    assert_eq!(csv_rows(&dir.join("distribution.csv")).len(), 26);

    let pi = std::f64::consts::PI.to_string();
    let dir = ok(&kerrfb(&["steady-state", "--loop", "static", "--phi", &pi, "--out", out]));
    let s = json(&dir.join("steady.json"));
    assert_eq!(s["effective_kappa"].as_f64(), Some(50.0));
    assert_eq!(s["effective_detuning_shift"].as_f64(), Some(0.0));

    let config = write_config(tmp.path(), &small_config());
    let dir = ok(&kerrfb(&["steady-state", "--loop", "closed", "--config", &config, "--out", out]));
    let s = json(&dir.join("steady.json"));
    assert_eq!(s["dims"], serde_json::json!([3, 10]));
    assert!(s["residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn linear_controller_phase_curve_is_flat() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.controller.chi = 0.0;
    cfg.phase_curve.dim = 12;
    let config = write_config(tmp.path(), &cfg);
    let dir = ok(&kerrfb(&["phase-curve", "--grid", "9", "--config", &config, "--out", tmp.path().to_str().unwrap()]));
    let rows = csv_rows(&dir.join("phase_curve.csv"));
    assert_eq!(rows[0], ["amplitude", "phase", "reflected_phase", "mean_photons", "degenerate"]);
    assert_eq!(rows.len(), 10);
    let phases: Vec<f64> = rows[1..]
        .iter()
        .filter(|r| r[4].parse::<f64>().unwrap() == 0.0)
        .map(|r| r[1].parse().unwrap())
        .collect();
    assert_eq!(phases.len(), 8);
    assert!(phases.iter().all(|p| (p - phases[0]).abs() < 1e-9), "{phases:?}");
}

#[test]
fn regression_writes_every_curve() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config();
    cfg.regression.integrator.t_max = 2.0;
    cfg.regression.integrator.dt = Some(0.01);
    let config = write_config(tmp.path(), &cfg);
    let dir = ok(&kerrfb(&["regression", "--grid", "40", "--config", &config, "--out", tmp.path().to_str().unwrap()]));
    let rows = csv_rows(&dir.join("regression_curves.csv"));
    assert_eq!(rows[0], ["case", "initial_photons", "time", "n", "normalized"]);
    let mut curves: Vec<(String, String)> = rows[1..].iter().map(|r| (r[0].clone(), r[1].clone())).collect();
    curves.dedup();
    assert_eq!(curves.len(), 6);
    assert_eq!(rows.len() - 1, 6 * 41);
    let tau = json(&dir.join("tau.json"));
    let cases = tau["cases"].as_array().unwrap();
    assert_eq!(cases.len(), 3);
    assert_eq!(cases[0]["tau_ratio_vs_open"].as_f64(), Some(1.0));
    assert!(cases.iter().all(|c| c["tau"].as_f64().unwrap() > 0.0));
}

#[test]
fn closed_loop_trajectory_and_sweep() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let config = write_config(tmp.path(), &small_config());
    let dir = ok(&kerrfb(&["closedloop-trajectory", "--t-max", "0.5", "--config", &config, "--out", out]));
    let rows = csv_rows(&dir.join("phase.csv"));
    assert_eq!(rows[0], ["time", "feedback", "plant", "loop_shift", "loop_shift_smoothed"]);
    assert_eq!(rows.len(), csv_rows(&dir.join("trajectory.csv")).len());
    assert!(json(&dir.join("phase.json"))["lowpass_time_constant"].as_f64().unwrap() > 0.0);

    let dir = ok(&kerrfb(&["phi-sweep", "--grid", "4", "--config", &config, "--out", out]));
    let rows = csv_rows(&dir.join("sweep.csv"));
    assert_eq!(rows[0], ["phi", "bistable", "peak_low_n", "peak_high_n", "occ_low", "occ_high"]);
    assert_eq!(rows.len(), 5);
    assert_eq!(json(&dir.join("sweep.json"))["points"].as_array().unwrap().len(), 4);
}

#[test]
fn ensemble_writes_standard_errors() {
    let tmp = TempDir::new().unwrap();
    let dir = ok(&kerrfb(&[
        "openloop-trajectory", "--ensemble", "4", "--workers", "2", "--t-max", "0.2", "--out",
        tmp.path().to_str().unwrap(),
    ]));
    let mean = csv_rows(&dir.join("ensemble.csv"));
    let se = csv_rows(&dir.join("standard_errors.csv"));
    assert_eq!(mean.len(), se.len());
    assert_eq!(json(&dir.join("metadata.json"))["n_traj"], 4);
}
