//! End-to-end runs of the `conic-liouville` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_conic-liouville");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

const KSTAR: &str = "command = \"kstar\"\nrefine = 0\n[problem]\nalpha = 0.3\n[numerics]\nradial_nodes = 80\n";

#[test]
fn missing_config_flag_is_a_usage_error() {
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn help_exits_cleanly() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("--config"));
}

#[test]
fn empty_config_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = run(&["--config", &cfg, "--output", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("kelvin-check"), "{err}");
}

#[test]
fn every_violation_is_listed() {
    let dir = tempfile::tempdir().unwrap();
    let text = "command = \"solve\"\n[problem]\nalpha = 1.5\nradius = -1.0\n[numerics]\nrings = 1\n";
    let cfg = write_config(dir.path(), text);
    let out = run(&["--config", &cfg, "--output", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.lines().filter(|l| l.starts_with("error:")).count() >= 3, "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "command = \"kstar\"\nbogus = 1\n");
    let out = run(&["--config", &cfg, "--output", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn kstar_run_writes_table_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), KSTAR);
    let out_dir = dir.path().join("out");
    let out = run(&["--config", &cfg, "--output", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let listed = String::from_utf8_lossy(&out.stdout);
    assert!(listed.contains("kstar.csv"));
    let table = fs::read_to_string(out_dir.join("kstar.csv")).unwrap();
    assert!(table.lines().count() >= 2);
    let manifest: toml::Value = fs::read_to_string(out_dir.join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(manifest["run"]["command"].as_str(), Some("kstar"));
    assert_eq!(manifest["run"]["exit_code"].as_integer(), Some(0));
    assert_eq!(manifest["config"]["problem"]["alpha"].as_float(), Some(0.3));
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), KSTAR);
    let out_dir = dir.path().join("out");
    let out = run(&["--config", &cfg, "--output", out_dir.to_str().unwrap(), "--seed", "99", "--refine", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let manifest: toml::Value = fs::read_to_string(out_dir.join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(manifest["config"]["seed"].as_integer(), Some(99));
    assert_eq!(manifest["config"]["refine"].as_integer(), Some(1));
}

#[test]
fn numerical_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = "command = \"solve\"\n[problem]\nlambda = 20.0\n[[problem.sources]]\nx = 0.0\ny = 0.0\nstrength = -0.5\n[numerics]\nrings = 8\ntheta = 24\n";
    let cfg = write_config(dir.path(), text);
    let out = run(&["--config", &cfg, "--output", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn seeded_runs_repeat_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let text = "command = \"rearrange-check\"\nseed = 5\n[problem]\nalpha = 0.4\n[numerics]\nrings = 10\ntheta = 32\nsamples = 3\nthresholds = 6\n";
    let cfg = write_config(dir.path(), text);
    let tables: Vec<String> = ["a", "b"]
        .iter()
        .map(|name| {
            let out_dir = dir.path().join(name);
            let out = run(&["--config", &cfg, "--output", out_dir.to_str().unwrap()]);
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
            fs::read_to_string(out_dir.join("rearrange.csv")).unwrap()
        })
        .collect();
    assert_eq!(tables[0], tables[1]);
}
