use std::process::{Command, Output};

use brw_core::array::parse_csv;
use serde_json::Value;

fn brw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brw"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8")
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&stdout(out)).expect("valid JSON")
}

fn golden(name: &str) -> String {
    let path = format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).expect("golden file")
}

#[test]
fn array_signs_shape() {
    let out = brw(&[
        "array", "--p", "0.5", "--K", "4", "--n", "64", "--seed", "7", "--format", "signs",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 9);
    assert!(lines
        .iter()
        .all(|l| l.len() == 64 && l.chars().all(|c| c == '+' || c == '-')));
}

#[test]
fn array_is_deterministic() {
    let args = [
        "array", "--p", "0.3", "--K", "3", "--n", "100", "--seed", "11",
    ];
    assert_eq!(brw(&args).stdout, brw(&args).stdout);
    let other = brw(&[
        "array", "--p", "0.3", "--K", "3", "--n", "100", "--seed", "12",
    ]);
    assert_ne!(brw(&args).stdout, other.stdout);
}

#[test]
fn array_csv_round_trips_and_matches_golden() {
    let out = brw(&[
        "array", "--p", "0.5", "--K", "2", "--n", "16", "--seed", "3", "--format", "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text, golden("array_k2_n16_seed3.csv"));
    assert!(text.starts_with("# schema=1"));
    let array = parse_csv(&text).expect("parses");
    assert_eq!(array.k(), 2);
    assert_eq!(array.n(), 16);
    assert!(brw_core::array::check_three_dot(&array));
}

#[test]
fn invalid_p_is_a_usage_error() {
    for p in ["1.0", "0", "-0.2", "1.5"] {
        let out = brw(&["array", "--p", p]);
        assert_eq!(out.status.code(), Some(2), "p = {p}");
        let msg = stderr(&out);
        assert!(
            msg.contains("--p") && msg.contains("open interval"),
            "{msg}"
        );
    }
    let out = brw(&["array", "--p", "abc"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn other_flags_are_validated() {
    for (args, flag) in [
        (vec!["array", "--n", "0"], "--n"),
        (vec!["clt", "--trials", "0"], "--trials"),
        (vec!["sigma", "--tol", "0"], "--tol"),
        (vec!["sigma", "--tol", "-1e-3"], "--tol"),
        (vec!["sigma", "--format", "signs"], "--format"),
    ] {
        let out = brw(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(stderr(&out).contains(flag), "{args:?}: {}", stderr(&out));
    }
    assert_eq!(brw(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn sigma_symmetric_case_is_identity() {
    let v = json(&brw(&["sigma", "--p", "0.5", "--K", "2"]));
    assert_eq!(v["schema"], 1);
    assert_eq!(v["K"], 2);
    let sigma = v["sigma"].as_array().unwrap();
    assert_eq!(sigma.len(), 5);
    for (i, row) in sigma.iter().enumerate() {
        for (j, x) in row.as_array().unwrap().iter().enumerate() {
            assert_eq!(x.as_f64().unwrap(), if i == j { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn sigma_k1_golden_forms() {
    let out = brw(&["sigma", "--p", "0.7", "--K", "1"]);
    assert_eq!(stdout(&out), golden("sigma_p07_k1.json"));
    let v = json(&out);
    let s = |i: usize, j: usize| v["sigma"][i][j].as_f64().unwrap();
    let (p, r) = (0.7f64, 0.4f64);
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    assert!(rel(s(0, 0), 1.0 + 2.0 * r * r - 3.0 * r.powi(4)) < 1e-12);
    assert!(rel(s(1, 1), 4.0 * p * (1.0 - p)) < 1e-12);
    assert!(rel(s(2, 2), p / (1.0 - p)) < 1e-12);
    assert!(rel(s(0, 1), 2.0 * r * (1.0 - r * r)) < 1e-12);
    assert_eq!(s(1, 2), 0.0);
    assert!((v["mu"][1].as_f64().unwrap() - 0.4).abs() < 1e-15);
    assert!(stdout(&out).contains("2.3333333333"));
}

#[test]
fn sigma_tolerance_contract() {
    let loose = json(&brw(&["sigma", "--p", "0.7", "--K", "1", "--tol", "1e-3"]));
    let tight = json(&brw(&["sigma", "--p", "0.7", "--K", "1", "--tol", "1e-12"]));
    let a = loose["sigma"][2][2].as_f64().unwrap();
    let b = tight["sigma"][2][2].as_f64().unwrap();
    assert!((a - b).abs() < 1e-3);
    assert_eq!(loose["sigma"][0][0], tight["sigma"][0][0]);
}

#[test]
fn sigma_csv_output() {
    let text = stdout(&brw(&[
        "sigma", "--p", "0.7", "--K", "1", "--format", "csv",
    ]));
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with('#'));
    assert_eq!(lines[1], "k,l,sigma");
    assert_eq!(lines.len(), 2 + 9);
}

#[test]
fn verify_passes_for_biased_chain() {
    let out = brw(&["verify", "--p", "0.7", "--K", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["passed"], true);
    assert_eq!(v["perfect_mixing"], false);
    let names: Vec<&str> = v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    for name in [
        "stationarity",
        "upward_mixing",
        "moments",
        "lag_covariance",
        "sigma",
    ] {
        assert!(names.contains(&name));
    }
}

#[test]
fn verify_symmetric_reports_perfect_mixing() {
    let out = brw(&["verify", "--p", "0.5", "--K", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["perfect_mixing"], true);
    assert_eq!(v["perfect_mixing_steps"], 7);
}

#[test]
fn verify_rejects_large_k() {
    let out = brw(&["verify", "--K", "7"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--K"));
}

#[test]
fn clt_acceptance_run() {
    let out = brw(&[
        "clt", "--p", "0.7", "--K", "2", "--n", "4096", "--trials", "20000", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["trials"], 20000);
    for key in ["sigma", "mu", "empirical", "stderr", "z"] {
        assert!(v[key].is_array(), "{key}");
    }
    assert!(v["max_abs_z"].as_f64().unwrap() <= 4.0);
}

#[test]
fn clt_symmetric_case_near_identity() {
    let v = json(&brw(&[
        "clt", "--p", "0.5", "--K", "1", "--n", "1024", "--trials", "4000", "--seed", "2",
    ]));
    for i in 0..3 {
        let e = v["empirical"][i][i].as_f64().unwrap();
        assert!((e - 1.0).abs() < 0.15, "{e}");
    }
}

#[test]
fn clt_tiny_run() {
    let out = brw(&["clt", "--K", "1", "--n", "64", "--trials", "8"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["stderr"][0][0].as_f64().unwrap() > 0.0);
    let out = brw(&["clt", "--K", "1", "--n", "64", "--trials", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&out)["stderr"][0][0].is_null());
    assert_eq!(brw(&["clt", "--trials", "1"]).status.code(), Some(2));
}

#[test]
fn clt_breach_exits_one() {
    // At n = 2 the covariance of U_n(1) is far from Σ and thousands of trials make that visible.
    let out = brw(&[
        "clt", "--p", "0.9", "--K", "2", "--n", "2", "--trials", "20000",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(json(&out)["passed"] == false);
}

fn visits(text: &str, set: &str) -> Vec<u64> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|f| f[0] == set)
        .map(|f| f[2].parse().unwrap())
        .collect()
}

#[test]
fn recurrence_growth_and_freeze() {
    let out = brw(&[
        "recurrence",
        "--p",
        "0.7",
        "--K",
        "3",
        "--n",
        "100000",
        "--trials",
        "8",
        "--components",
        "1",
        "--components",
        "0",
        "--components",
        "-1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with('#'));
    assert_eq!(
        text.lines().nth(1),
        Some("component_set,n,visits,last_visit")
    );
    let one = visits(&text, "1");
    assert_eq!(one.len(), 5);
    assert!(one.windows(2).skip(1).all(|w| w[0] < w[1]), "{one:?}");
    let zero = visits(&text, "0");
    assert_eq!(zero[3], zero[4]);
    let up = visits(&text, "-1");
    assert_eq!(up[3], up[4]);
}

#[test]
fn recurrence_component_errors() {
    for text in ["5", "1,x", "", "1,1"] {
        let out = brw(&["recurrence", "--K", "2", "--n", "100", "--components", text]);
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert!(stderr(&out).contains("--components"));
    }
    assert_eq!(brw(&["recurrence", "--n", "100"]).status.code(), Some(2));
    let out = brw(&[
        "recurrence",
        "--K",
        "3",
        "--n",
        "100",
        "--trials",
        "2",
        "--components",
        "1,2,3",
    ]);
    assert!(stdout(&out).contains("1;2;3,100,"));
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sigma.json");
    let out = brw(&[
        "sigma",
        "--p",
        "0.7",
        "--K",
        "1",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, golden("sigma_p07_k1.json"));
    let bad = dir.path().join("missing").join("x.json");
    let out = brw(&["sigma", "--out", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
