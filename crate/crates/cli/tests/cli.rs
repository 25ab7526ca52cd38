use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ptwh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptwh")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = ptwh(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn csv_records(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let headers = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (headers, rows)
}

#[test]
fn spectrum_table_has_one_row_per_level_and_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    ok(&["spectrum", "--seed", "3", "--out", out.to_str().unwrap()]);
    let (headers, rows) = csv_records(&out);
    assert_eq!(headers, ["gamma", "level_index", "re_lambda", "im_lambda", "phase_label"]);
    assert_eq!(rows.len(), 301 * 64);
    assert!(rows.iter().all(|r| r[4] == "exact_PT" || r[4] == "broken_PT"));
}

#[test]
fn json_and_csv_carry_identical_values() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("t.csv");
    let json_path = dir.path().join("t.json");
    let args = ["teleport", "--seed", "9", "--j", "24", "--g", "10", "--gamma", "0.05"];
    ok(&[&args[..], &["--out", csv_path.to_str().unwrap()]].concat());
    ok(&[&args[..], &["--format", "json", "--out", json_path.to_str().unwrap()]].concat());
    let (headers, rows) = csv_records(&csv_path);
    let json: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(rows.len(), json.len());
    for (row, obj) in rows.iter().zip(&json) {
        for (h, cell) in headers.iter().zip(row) {
            match &obj[h] {
                Value::Number(n) => assert_eq!(cell.parse::<f64>().unwrap(), n.as_f64().unwrap(), "{h}"),
                Value::String(s) => assert_eq!(cell, s, "{h}"),
                Value::Bool(b) => assert_eq!(cell, &b.to_string(), "{h}"),
                Value::Null => assert!(cell.is_empty(), "{h}"),
                other => panic!("{h}: unexpected {other}"),
            }
        }
    }
}

#[test]
fn manifest_records_config_and_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.csv");
    ok(&["heatmap", "--base-seed", "4", "--realizations", "3", "--t-steps", "3", "--out", out.to_str().unwrap()]);
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("h.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "heatmap");
    assert_eq!(manifest["seeds_used"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["config_snapshot"]["base_seed"], 4);
    assert!(manifest["wall_time"].as_f64().unwrap() >= 0.0);
}

#[test]
fn flags_override_config_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"seed": 2, "g": 3.0, "gamma": 0.1}"#).unwrap();
    let from_config = ok(&["teleport", "--config", cfg.to_str().unwrap()]);
    let overridden = ok(&["teleport", "--config", cfg.to_str().unwrap(), "--g", "4"]);
    let direct = ok(&["teleport", "--seed", "2", "--g", "4", "--gamma", "0.1"]);
    assert_ne!(from_config.stdout, overridden.stdout);
    assert_eq!(overridden.stdout, direct.stdout);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"seed": 1, "not_a_key": 0}"#).unwrap();
    for args in [
        vec!["spectrum"],
        vec!["spectrum", "--seed", "1", "--gamma-steps", "0"],
        vec!["teleport", "--seed", "1", "--config", "/nonexistent/config.json"],
        vec!["teleport", "--config", bad.to_str().unwrap()],
        vec!["teleport", "--seed", "1", "--evolution-mode", "sideways"],
        vec!["teleport", "--seed", "1", "--threads", "0"],
    ] {
        assert_eq!(ptwh(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn every_command_documents_its_columns() {
    for (cmd, column) in [
        ("spectrum", "phase_label"),
        ("bifurcation", "re_low"),
        ("ep-stats", "gamma_c"),
        ("teleport", "fidelity"),
        ("fidelity-sweep", "mean_fidelity"),
        ("heatmap", "peak_time"),
    ] {
        let help = String::from_utf8(ok(&[cmd, "--help"]).stdout).unwrap();
        assert!(help.contains(column), "{cmd}");
    }
}
