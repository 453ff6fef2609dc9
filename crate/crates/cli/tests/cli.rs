use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn epstein(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epstein")).args(args).output().unwrap()
}

fn small_run(target: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", target, "--out", out.to_str().unwrap(), "--n", "500"];
    args.extend_from_slice(extra);
    epstein(&args)
}

fn data_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn list_names_every_scenario() {
    let out = epstein(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["free-particle", "superposition", "measurement", "collapse", "harmonic-coherent", "custom"] {
        assert!(text.contains(&format!("{name}: ")), "{name}");
    }
}

#[test]
fn run_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run("free-particle", dir.path(), &["--t-end", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    for name in ["manifest.json", "config.toml", "trajectories.csv", "psi_p.csv", "current.csv", "stats.json"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let manifest = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 0"));
    assert!(manifest.contains("\"sha256\""));
}

#[test]
fn identical_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let extra = ["--seed", "7", "--t-end", "0.5"];
    assert!(small_run("superposition", a.path(), &extra).status.success());
    assert!(small_run("superposition", b.path(), &extra).status.success());
    assert_eq!(data_files(a.path()), data_files(b.path()));
}

#[test]
fn written_config_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(small_run("linear-drift", a.path(), &["--t-end", "0.5"]).status.success());
    let config = a.path().join("config.toml");
    let out = epstein(&["run", config.to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(data_files(a.path()), data_files(b.path()));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(small_run("no-such-scenario", dir.path(), &[]).status.code(), Some(2));
    assert_eq!(small_run("measurement", dir.path(), &["--dpe", "0"]).status.code(), Some(2));
    assert_eq!(small_run("free-particle", dir.path(), &["--dpe", "3"]).status.code(), Some(2));
    assert_eq!(small_run("free-particle", dir.path(), &["--threads", "0"]).status.code(), Some(2));
    assert_eq!(epstein(&["run"]).status.code(), Some(2));
    assert_eq!(epstein(&["run", "/nonexistent/x.toml"]).status.code(), Some(2));
}

#[test]
fn validate_passes_at_reduced_size() {
    let out = epstein(&["validate", "--n", "500"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert!(text.trim_end().ends_with("PASS"));
}
