use std::path::PathBuf;
use std::process::{Command, Output};

use bpdp::chain::{compute_pi, ChainParams};
use bpdp::fitting::{fit_first_order, fit_four_param, PiDataset};
use bpdp::ModelParams;
use serde_json::Value;

fn bpdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpdp"))
        .args(args)
        .env_remove("BPDP_CONVENTION")
        .env_remove("BPDP_THREADS")
        .env_remove("BPDP_SEED")
        .env_remove("BPDP_MEMORY_CAP")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn number(v: &Value) -> f64 {
    v.to_string().parse().unwrap()
}

fn temp_path(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bpdp-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn pi_matches_library() {
    let rec = json(&bpdp(&["pi", "--log2-inv-p", "4"]));
    let want = compute_pi(&ChainParams::for_model(ModelParams::from_log2_inv_p(4).unwrap()), 1).unwrap();
    assert_eq!(number(&rec["outputs"]["log_pi"]), want.log_pi);
    assert_eq!(rec["parameters"]["threshold"], 89);
    assert_eq!(rec["parameters"]["convention"], "exact");
    assert_eq!(rec["command"], "pi");
}

#[test]
fn pi_threshold_two_is_zero() {
    let rec = json(&bpdp(&["pi", "--p", "0.9", "--threshold", "2"]));
    assert_eq!(number(&rec["outputs"]["log_pi"]), 0.0);
}

#[test]
fn exit_statuses() {
    assert_eq!(bpdp(&["pi"]).status.code(), Some(1));
    assert_eq!(bpdp(&["pi", "--p", "1.5"]).status.code(), Some(1));
    assert_eq!(bpdp(&["pi", "--log2-inv-p", "6", "--memory-cap", "10"]).status.code(), Some(3));
    assert_eq!(bpdp(&["--help"]).status.code(), Some(0));
}

#[test]
fn env_and_flag_precedence() {
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_bpdp"));
        cmd.args(["pi", "--log2-inv-p", "2"]);
        if let Some(e) = env {
            cmd.env("BPDP_CONVENTION", e);
        }
        if let Some(f) = flag {
            cmd.args(["--convention", f]);
        }
        json(&cmd.output().unwrap())["parameters"]["convention"].clone()
    };
    assert_eq!(run(None, None), "exact");
    assert_eq!(run(Some("at-least"), None), "at-least");
    assert_eq!(run(Some("at-least"), Some("exact")), "exact");
}

#[test]
fn scan_rows_and_empty_range() {
    let out = bpdp(&["scan", "--log2-inv-p-range", "2..5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("log2_inv_p,log_pi"));
    let empty = bpdp(&["scan", "--log2-inv-p-range", "5..4"]);
    assert_eq!(String::from_utf8(empty.stdout).unwrap().lines().count(), 1);
}

#[test]
fn scan_resume_replays_missing_rows() {
    let full = temp_path("full.csv");
    let partial = temp_path("partial.csv");
    let full_s = full.to_str().unwrap();
    assert!(bpdp(&["scan", "--log2-inv-p-range", "2..3", "--output", full_s]).status.success());
    let text = std::fs::read_to_string(&full).unwrap();
    let first_two: Vec<&str> = text.lines().take(2).collect();
    std::fs::write(&partial, first_two.join("\n") + "\n").unwrap();
    let out = bpdp(&["scan", "--log2-inv-p-range", "2..3", "--output", partial.to_str().unwrap(), "--resume"]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&partial).unwrap(), text);
}

#[test]
fn fit_round_trips_scan_output() {
    let path = temp_path("scan.csv");
    let p = path.to_str().unwrap();
    assert!(bpdp(&["scan", "--log2-inv-p-range", "2..5", "--output", p]).status.success());
    let rec = json(&bpdp(&["fit", "--input", p]));
    let data = PiDataset::from_csv(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let mut rows = Vec::new();
    for k in 2..=5 {
        rows.push((k, compute_pi(&ChainParams::for_model(ModelParams::from_log2_inv_p(k).unwrap()), 1).unwrap().log_pi));
    }
    assert_eq!(data.rows(), &rows[..]);
    let first = fit_first_order(&data).unwrap();
    assert_eq!(number(&rec["outputs"]["first_order"]["alpha"]), first.alpha);
    assert_eq!(number(&rec["outputs"]["first_order"]["lambda1"]), first.lambda1);
    match fit_four_param(&data) {
        Ok(fit) => assert_eq!(number(&rec["outputs"]["four_param"]["alpha"]), fit.alpha),
        Err(e) => assert_eq!(rec["outputs"]["four_param"]["error"], e.to_string()),
    }
}

#[test]
fn fit_default_table() {
    let rec = json(&bpdp(&["fit"]));
    let four = &rec["outputs"]["four_param"];
    for (key, want) in [("alpha", 0.99978), ("lambda1", 1.6507), ("beta", 0.53239), ("lambda2", 4.2518)] {
        assert!(((number(&four[key]) - want) / want).abs() < 1e-3, "{key}");
    }
    assert!((number(&rec["outputs"]["third_order"]["exponent"]) - 0.19414).abs() < 1e-4);
    assert_eq!(rec["outputs"]["figures"]["p_log_pi"].as_array().unwrap().len(), 16);
}

#[test]
fn constants_match_figure_constant() {
    let rec = json(&bpdp(&["constants"]));
    assert!((number(&rec["outputs"]["lambda2_f"]) - 5.80490630427886).abs() < 1e-10);
}

#[test]
fn functions_columns_are_monotone() {
    let out = bpdp(&["functions", "--grid", "1e-6..60", "--points", "50"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<f64>> =
        text.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 50);
    assert_eq!(rows[0][0], 1e-6);
    assert_eq!(rows[49][0], 60.0);
    for w in rows.windows(2) {
        assert!(w[1][0] > w[0][0]);
        for col in 1..5 {
            assert!(w[1][col] < w[0][col], "column {col}");
        }
    }
}

#[test]
fn verify_suites_pass() {
    for suite in ["stochasticity", "oracle", "matrix"] {
        let out = bpdp(&["verify", "--suite", suite]);
        assert_eq!(out.status.code(), Some(0), "{suite}: {}", String::from_utf8_lossy(&out.stdout));
        assert!(String::from_utf8(out.stdout).unwrap().starts_with("PASS"));
    }
}

#[test]
fn records_are_deterministic() {
    let args = ["simulate", "--event", "IF", "--width", "3", "--height", "3", "--p", "0.3", "--samples", "5000", "--seed", "4"];
    let mut a = json(&bpdp(&args));
    let mut b = json(&bpdp(&args));
    a["wall_time_seconds"] = Value::Null;
    b["wall_time_seconds"] = Value::Null;
    assert_eq!(a, b);
    assert_eq!(a["seed"], 4);
}

#[test]
fn matrix_record() {
    let rec = json(&bpdp(&["matrix", "--p", "0.01", "--k-max", "3"]));
    let powers = rec["outputs"]["power_entries"].as_array().unwrap();
    assert_eq!(powers.len(), 4);
    assert_eq!(powers[1]["matrix_power"], 4);
    assert_eq!(rec["outputs"]["characteristic_polynomial"].as_array().unwrap().len(), 7);
}
