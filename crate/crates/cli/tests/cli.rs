use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lab")).args(args).output().expect("lab runs")
}

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("lab-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn small_orbits_config(dir: &Path) -> PathBuf {
    let out = lab(&["preset", "acc-orbit-counts"]);
    assert!(out.status.success());
    let mut v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    v["name"] = "orbits-small".into();
    v["experiment"]["n_max"] = 6.into();
    let p = dir.join("orbits.json");
    std::fs::write(&p, v.to_string()).unwrap();
    p
}

#[test]
fn preset_catalog_lists_every_criterion() {
    let out = lab(&["preset"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("acc-")).count(), 10);
    assert_eq!(lab(&["preset", "acc-missing"]).status.code(), Some(2));
}

#[test]
fn run_writes_stable_report() {
    let dir = scratch("run");
    let cfg = small_orbits_config(&dir);
    let out_dir = dir.join("out");
    let args = ["orbits", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--threads", "1"];
    let a = lab(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let first = std::fs::read(out_dir.join("report.json")).unwrap();
    assert!(out_dir.join("orbits.csv").exists());
    let b = lab(&args);
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(first, std::fs::read(out_dir.join("report.json")).unwrap());
    let r: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(r["passed"], true);
    assert!(r.get("wall_seconds").is_none());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bad_configs_are_rejected_before_running() {
    let dir = scratch("bad");
    let cfg = small_orbits_config(&dir);
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    v["experiment"]["typo"] = 1.into();
    let bad = dir.join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let out = lab(&["orbits", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo"));
    // kind on the command line must match the config
    assert_eq!(lab(&["curve", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn failed_assertion_sets_exit_code() {
    // roof = 1 leaves no exponential to fit, so the preset's expectations fail
    let out = lab(&["fit", "--preset", "acc-shadow-dissipative"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("FAIL model_kind"));
}

#[test]
fn precision_override_is_echoed() {
    let out = lab(&["compare", "--preset", "acc-swap-reversal", "--precision-bits", "160"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let json = &text[text.find('{').unwrap()..];
    let r: serde_json::Value = serde_json::from_str(json).unwrap();
    assert_eq!(r["precision_bits"], 160);
}
