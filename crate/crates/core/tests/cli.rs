use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xxz-droplet")).args(args).env_remove("XXZ_DROPLET_OUTPUT_DIR").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_passes_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let o = run(&["verify", "--sites", "10", "--down", "3", "--epsilon", "0.05", "--output", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS max_abs_diff"));
    let report: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert!(report["comparison"]["max_abs_diff"].as_f64().unwrap() < report["comparison"]["tolerance"].as_f64().unwrap());
    assert!(report.get("generated_at").is_none());
}

#[test]
fn verify_csv_has_comparison_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("band.csv");
    let o = run(&["verify", "--sites", "8", "--down", "2", "--format", "csv", "--output", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k_index,k,E,E_oracle,abs_diff,rank"));
    assert_eq!(lines.count(), 8);
}

#[test]
fn droplet_csv_tabulates_band() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("band.csv");
    let o = run(&["droplet", "--sites", "10", "--down", "3", "--format", "csv", "--output", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["k_index", "k", "E"]);
    let energies: Vec<f64> = reader.records().map(|r| r.unwrap()[2].parse().unwrap()).collect();
    assert_eq!(energies.len(), 10);
    assert!(energies.iter().all(|e| (e - 4.0).abs() < 0.01));
}

#[test]
fn kink_at_zero_coupling_reports_energy_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kink.json");
    let o = run(&["kink", "--sites", "12", "--down", "6", "--epsilon", "0", "--output", path.to_str().unwrap(), "--timestamp"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let dump: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(dump["energy"].as_f64(), Some(2.0));
    assert!(dump["generated_at"].is_u64());
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_xxz-droplet"))
        .args(["enumerate", "--sites", "10", "--down", "3", "--wmax", "4"])
        .env("XXZ_DROPLET_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let dump: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("enumerate.json")).unwrap()).unwrap();
    assert_eq!(dump["depth_counts"][0], 1);
}

#[test]
fn config_file_supplies_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "sites = 8\ndown = 2\nepsilon = 0.1\n").unwrap();
    let o = run(&["oracle", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("28 states in 8 momentum blocks"));
}

#[test]
fn bad_arguments_exit_two() {
    assert_eq!(run(&["droplet", "--sites", "ten"]).status.code(), Some(2));
    assert_eq!(run(&["droplet", "--sites", "10", "--down", "1", "--epsilon", "0.2"]).status.code(), Some(0));
    let o = run(&["droplet", "--sites", "10", "--down", "3", "--epsilon", "0.2"]);
    assert_eq!(o.status.code(), Some(2));
    let record: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(record["error"], "InvalidParameter");
    let o = run(&["droplet", "--down", "3"]);
    assert_eq!(o.status.code(), Some(2));
    let record: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(record["error"], "Usage");
}

#[test]
fn nonconvergence_is_reported_as_json() {
    let o = run(&["droplet", "--sites", "10", "--down", "3", "--max-iter", "2"]);
    assert_eq!(o.status.code(), Some(1));
    let record: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(record["error"], "NonConvergence");
}

#[test]
fn stability_and_scaling_run() {
    let o = run(&["stability", "--down", "3", "--sizes", "12,16,20"]);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["scaling", "--sites", "10", "--down", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("log-log slope 2.0000"));
}
