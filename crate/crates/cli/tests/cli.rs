//! Binary-level checks: exit codes, provenance headers, output formats, and
//! byte-level determinism.

use std::process::{Command, Output};

const SOURCE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/dsbs025.json");

fn wz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wz")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

/// Data rows of a CSV payload: skips `#` comments and the header line.
fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn kappa_prints_the_spot_value() {
    let out = wz(&["kappa", "--rho", "1", "--eps", "0.5", "--delta", "1", "--n", "100"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("# wz "), "provenance header missing: {text}");
    let value: f64 = text.lines().last().unwrap().parse().unwrap();
    assert!((value - 0.6258).abs() <= 1e-3, "kappa {value}");
}

#[test]
fn validation_failures_exit_2() {
    let out = wz(&["kappa", "--rho", "-1", "--n", "100"]);
    assert_eq!(out.status.code(), Some(2));
    let missing = wz(&["rd-curve", "--source", "/nonexistent/source.json"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_exits_2() {
    let out = wz(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn enumeration_guard_exits_3() {
    let out = wz(&["simulate", "--source", SOURCE, "--n", "9", "--rate", "0.5", "--delta", "0.3"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("guard"), "stderr: {err}");
}

#[test]
fn rd_curve_endpoints_vanish_and_output_is_deterministic() {
    let args = ["rd-curve", "--source", SOURCE, "--points", "5", "--seed", "3"];
    let a = wz(&args);
    let b = wz(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout, "same argv and seed must give identical bytes");
    let rows = csv_rows(&stdout(&a));
    assert_eq!(rows.len(), 5);
    let first: f64 = rows.first().unwrap()[1].parse().unwrap();
    let last: f64 = rows.last().unwrap()[1].parse().unwrap();
    assert!(first.abs() <= 1e-3, "r at mu=0 is {first}");
    assert!(last.abs() <= 1e-3, "r at mu=1 is {last}");
}

#[test]
fn bits_flag_rescales_the_rate_column() {
    let nats = csv_rows(&stdout(&wz(&[
        "rd-curve", "--source", SOURCE, "--points", "3", "--seed", "3",
    ])));
    let bits = csv_rows(&stdout(&wz(&[
        "rd-curve", "--source", SOURCE, "--points", "3", "--seed", "3", "--bits",
    ])));
    for (rn, rb) in nats.iter().zip(&bits) {
        let rate_nats: f64 = rn[2].parse().unwrap();
        let rate_bits: f64 = rb[2].parse().unwrap();
        assert!((rate_bits - rate_nats / std::f64::consts::LN_2).abs() <= 1e-9);
        assert_eq!(rn[3], rb[3], "distortion column must not rescale");
    }
}

#[test]
fn simulate_reports_the_exact_small_block_row() {
    let out = wz(&["simulate", "--source", SOURCE, "--n", "2", "--rate", "0.3", "--delta", "0.3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("n,m,R,Delta,p_c,g_n,f_hat,margin"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 1);
    let row = &rows[0];
    assert_eq!(row[0], "2");
    assert_eq!(row[1], "1");
    let p_c: f64 = row[4].parse().unwrap();
    // Best single-message scheme decodes both symbols from side information.
    assert!((p_c - 0.5625).abs() <= 1e-12);
    assert!(row[6].is_empty() && row[7].is_empty(), "f_hat columns empty without --f-hat");
}

#[test]
fn monte_carlo_runs_are_reproducible() {
    let args = [
        "simulate", "--source", SOURCE, "--n", "4", "--rate", "0.3", "--delta", "0.3",
        "--trials", "64", "--seed", "9",
    ];
    let a = wz(&args);
    let b = wz(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn out_file_resolves_under_the_env_directory() {
    let dir = std::env::temp_dir().join(format!("wz-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_wz"))
        .args(["kappa", "--rho", "1", "--n", "100", "--out", "kappa.txt"])
        .env("WZ_OUT_DIR", &dir)
        .output()
        .expect("binary runs");
    assert!(out.status.success());
    assert!(out.stdout.is_empty(), "file output should not also print");
    let written = std::fs::read_to_string(dir.join("kappa.txt")).unwrap();
    assert!(written.starts_with("# wz "));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn exponent_emits_json_with_zero_exponent_inside_the_region() {
    let out = wz(&[
        "exponent", "--source", SOURCE, "--rate", "0.7", "--delta", "1.0", "--seed", "3",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["tool"], "wz");
    assert_eq!(v["unit"], "nats");
    assert_eq!(v["f"], 0.0, "trivially achievable target must have zero exponent");
    assert_eq!(v["clamped"], true);
    assert_eq!(v["source"], "08843fd2adfebd27");
}
