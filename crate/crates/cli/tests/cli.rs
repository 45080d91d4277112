use std::fs;
use std::process::{Command, Output};

fn extinction(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_extinction")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(extinction(&["bogus"]).status.code(), Some(2));
    assert_eq!(
        extinction(&["solve", "--builtin", "cubic", "--subset", "all", "--no-such-flag"]).status.code(),
        Some(2)
    );
}

#[test]
fn computation_errors_exit_with_one_and_json() {
    let out = extinction(&["solve", "--builtin", "cubic", "--subset", "all", "--types", "(0,0)"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).expect("JSON error on stderr");
    assert!(err["error"].is_string());
    assert!(err["message"].is_string());
}

#[test]
fn empty_subset_gives_all_ones() {
    let out = extinction(&["solve", "--builtin", "example1", "--subset", "empty", "--window", "5", "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let q = v["q"].as_array().unwrap();
    assert_eq!(q.len(), 5);
    assert!(q.iter().all(|e| e["q"].as_f64() == Some(1.0)));
}

#[test]
fn solve_cubic_from_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cubic.json");
    let spec = r#"{"name":"cubic","types":["0"],"laws":{"0":{"form":"explicit","outcomes":[
        {"prob":0.5,"children":[]},{"prob":0.5,"children":["0","0","0"]}]}}}"#;
    fs::write(&path, spec).unwrap();
    let out = extinction(&["solve", "--spec", path.to_str().unwrap(), "--subset", "all", "--json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let q = v["q"][0]["q"].as_f64().unwrap();
    assert!((q - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-8);
}

#[test]
fn classify_figure1_edge_list() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("figure1.json");
    fs::write(&path, r#"{"vertices":["1","2","3","4"],"implies":[["1","3"],["2","1"],["2","4"]]}"#).unwrap();
    let out = extinction(&["classify", "--family", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("classes (7)"), "{text}");
    assert!(text.contains("{1,4} ~ {1,2,4}"));
    assert!(text.contains("{3,4} ~ {1,3,4} ~ {2,3,4} ~ {1,2,3,4}"));
    assert!(text.contains("Ext: finite (7)"));
}

#[test]
fn simulate_cubic_near_golden_ratio() {
    let out = extinction(&["simulate", "--builtin", "cubic", "--subset", "all", "--trials", "20000", "--seed", "7"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let est = &v["estimate"];
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    assert!(est["ci_low"].as_f64().unwrap() <= golden + 0.01);
    assert!(est["ci_high"].as_f64().unwrap() >= golden - 0.01);
    assert!((est["point"].as_f64().unwrap() - golden).abs() < 0.015);
}

#[test]
fn figure3_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out =
            extinction(&["figure3", "--r-list", "0.05,0.2,0.5", "--levels", "4", "--out", path.to_str().unwrap()]);
        assert!(out.status.success());
    }
    let first = fs::read(&a).unwrap();
    assert_eq!(first, fs::read(&b).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("r,level,q_value,converged,residual"));
    assert_eq!(text.lines().count(), 1 + 12);
}
