use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
run_id = "small"
seed = 5
scenario = "car_vs_rate"
acquisition_bins = 1000000000

[sweep]
car_powers_mw = [2.0, 4.0, 8.0]
"#;

fn hspsmux(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hspsmux")).args(args).output().unwrap()
}

fn run_small(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let config = dir.join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    let out = dir.join(out);
    let mut args = vec!["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    hspsmux(&args)
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_small(dir.path(), "a", &[]);
    let b = run_small(dir.path(), "b", &[]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(b.status.success());
    for name in ["metrics.json", "car_vs_rate.csv", "config.echo"] {
        assert_eq!(
            read(dir.path().join("a/small").join(name)),
            read(dir.path().join("b/small").join(name)),
            "{name}"
        );
    }
    let printed = String::from_utf8(a.stdout).unwrap();
    assert!(printed.trim().ends_with("small"));
}

#[test]
fn seed_flag_changes_the_result() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_small(dir.path(), "a", &[]).status.success());
    assert!(run_small(dir.path(), "b", &["--seed", "6"]).status.success());
    assert_ne!(
        read(dir.path().join("a/small/car_vs_rate.csv")),
        read(dir.path().join("b/small/car_vs_rate.csv"))
    );
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_small(dir.path(), "a", &[]).status.success());
    let echo = dir.path().join("a/small/config.echo");
    let out = dir.path().join("b");
    let rerun = hspsmux(&["--config", echo.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(rerun.status.success(), "{}", String::from_utf8_lossy(&rerun.stderr));
    assert_eq!(
        read(dir.path().join("a/small/metrics.json")),
        read(out.join("small/metrics.json"))
    );
}

#[test]
fn scenario_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_small(dir.path(), "a", &["--scenario", "loss_budget"]);
    assert!(out.status.success());
    assert!(dir.path().join("a/small/loss_budget.csv").is_file());
}

#[test]
fn unknown_scenario_is_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_small(dir.path(), "a", &["--scenario", "nope"]);
    assert!(!out.status.success());
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"], "unknown_scenario");
    assert!(record["message"].as_str().unwrap().contains("nope"));
    assert!(!dir.path().join("a").exists());
}

#[test]
fn invalid_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "acquisition_bins = 0\n").unwrap();
    let out = hspsmux(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(record["error"].is_string());
}

#[test]
fn config_and_preset_conflict() {
    let out = hspsmux(&["--config", "x.toml", "--preset", "paper2021"]);
    assert!(!out.status.success());
}
