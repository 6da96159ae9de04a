//! Exit codes and output files of the `shockform` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"));
    fs::read_to_string(path).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn shockform(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shockform"))
        .args(args)
        .env("SHOCKFORM_OUTPUT_ROOT", root)
        .output()
        .unwrap()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn stock_run_stops_at_the_mu_floor() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "sine.toml", &scenario("burgers_sine"));
    let out = shockform(&["run", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("burgers_sine");
    assert_eq!(summary(&dir)["stop_reason"], "mu_floor");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["format_version"], 1);
    assert!(!manifest["git_describe"].as_str().unwrap().is_empty());
    assert!(dir.join("series.csv").is_file());
    assert!(dir.join("mu_history.csv").is_file());
    assert!(dir.join("snapshots/snapshot_00000.csv").is_file());
}

#[test]
fn superluminal_speed_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = scenario("coupled_plane").replace("speed = 0.5", "speed = 1.0");
    let cfg = write(tmp.path(), "fast.toml", &text);
    let out = shockform(&["run", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn short_horizon_stops_at_t_max() {
    let tmp = tempfile::tempdir().unwrap();
    let text = scenario("burgers_sine").replace("[solver]\n", "[solver]\nt_max = 0.1\n");
    let cfg = write(tmp.path(), "short.toml", &text);
    let out = shockform(&["run", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(summary(&tmp.path().join("burgers_sine"))["stop_reason"], "t_max");
}

#[test]
fn unknown_keys_and_missing_files_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "typo.toml", &format!("colour = 1\n{}", scenario("burgers_sine")));
    assert_eq!(shockform(&["run", cfg.to_str().unwrap()], tmp.path()).status.code(), Some(2));
    assert_eq!(shockform(&["run", "no_such_scenario"], tmp.path()).status.code(), Some(2));
}

#[test]
fn verify_plane_wave_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = shockform(&["verify", "burgers_sine"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let verdict: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("burgers_sine/verdict.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(verdict["pass"], true);
    assert_eq!(verdict["branch"], "shock");
}

#[test]
fn verify_coarse_grid_fails_the_lifespan_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let text = scenario("burgers_sine").replace("nu = 512", "nu = 16");
    let cfg = write(tmp.path(), "coarse.toml", &text);
    let out = shockform(&["verify", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL lifespan_gap"), "{stdout}");
}

#[test]
fn verify_flat_data_takes_the_no_shock_branch() {
    let tmp = tempfile::tempdir().unwrap();
    let out = shockform(&["verify", "burgers_flat"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("no-shock"));
}

#[test]
fn sweep_writes_one_row_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("sweep");
    let out = shockform(
        &["sweep", "burgers_sine", "-o", dir.to_str().unwrap(), "-p", "kappa", "-v", "0.05,0.1"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.join("sweep_kappa.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().next().unwrap().starts_with("parameter,value,error"));
}

#[test]
fn sweep_rejects_bad_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_name = shockform(&["sweep", "burgers_sine", "-p", "gamma", "-v", "1"], tmp.path());
    assert_eq!(bad_name.status.code(), Some(2));
    let bad_value = shockform(&["sweep", "burgers_sine", "-p", "Nu", "-v", "12.5"], tmp.path());
    assert_eq!(bad_value.status.code(), Some(2));
}

#[test]
fn validate_reports_structural_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let out = shockform(&["validate", "coupled_ripple"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pass"], true);
    assert!(report["checks"].as_array().unwrap().len() >= 5);
}

#[test]
fn identical_configs_give_identical_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        let out = shockform(&["run", "coupled_plane", "-o", d.to_str().unwrap()], tmp.path());
        assert_eq!(out.status.code(), Some(0));
    }
    let sa = fs::read(a.join("summary.json")).unwrap();
    let sb = fs::read(b.join("summary.json")).unwrap();
    assert_eq!(sa, sb);
}
