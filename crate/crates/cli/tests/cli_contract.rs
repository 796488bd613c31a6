use std::path::Path;
use std::process::{Command, Output};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adhoc-select"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = r#"{"scene": {"mics": 2, "max_order": 2, "duration_s": 0.5}}"#;

#[test]
fn zero_scenes_is_an_error_and_creates_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["simulate", "--count", "0", "--out", "data"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error:"));
    assert!(!dir.path().join("data").exists());
}

#[test]
fn non_empty_output_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("config.json"), TINY).unwrap();
    let sim = ["simulate", "--count", "2", "--out", "data", "--config", "config.json"];
    assert!(cli(dir.path(), &sim).status.success());
    let again = cli(dir.path(), &sim);
    assert!(!again.status.success());
    assert!(stderr(&again).contains("--force"));
    let forced: Vec<&str> = sim.iter().copied().chain(["--force"]).collect();
    assert!(cli(dir.path(), &forced).status.success());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"model": {"filterz": 4}}"#).unwrap();
    let o = cli(dir.path(), &["simulate", "--count", "1", "--out", "data", "--config", "bad.json"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("filterz"), "{}", stderr(&o));
}

#[test]
fn snr_sweep_needs_a_fixed_k_source() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["snr-sweep", "--data", "d", "--model", "m", "--out", "o"]);
    assert!(!o.status.success());
    let bad = cli(dir.path(), &["snr-sweep", "--data", "d", "--model", "m", "--out", "o", "--match-k", "zero"]);
    assert!(stderr(&bad).contains("--match-k"));
}
