use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lil_lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lil-lab"))
        .current_dir(dir)
        .env("LIL_LAB_WORKERS", "2")
        .args(args)
        .output()
        .unwrap()
}

fn artifact(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

#[test]
fn constants_brackets_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lil_lab(tmp.path(), &["constants", "--h", "2*(LL)^1", "--H", "const:1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = artifact(&tmp.path().join("lil-lab-out"), "constants.json");
    assert_eq!(doc["kind"], "constants");
    let (lo, hi) = (num(&doc["result"]["c0_lo"]), num(&doc["result"]["c0_hi"]));
    assert!(lo >= 0.95 && hi <= 1.05, "[{lo}, {hi}]");
}

#[test]
fn fn_bound_prints_the_gaussian_term() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lil_lab(
        tmp.path(),
        &["fn-bound", "--delta", "1", "--eta", "1", "--s", "3", "--t", "50", "--lambda-n", "100"],
    );
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((num(&v["theorem4"]) - (-25.0f64 / 3.0).exp()).abs() < 1e-15);

    let out = lil_lab(
        tmp.path(),
        &["fn-bound", "--t", "50", "--lambda-n", "100", "--moment-s", "1e-20"],
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let expected = (-25.0f64 / 3.0).exp() + num(&v["C"]) * 1e-20 / 50f64.powi(3);
    assert!((num(&v["theorem4"]) - expected).abs() < 1e-15);
}

#[test]
fn invalid_input_exits_2_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.toml"), "kind = \"hclass\"\n[hclass]\nh = \"LL\"\nbogus = 1\n")
        .unwrap();
    let out = lil_lab(tmp.path(), &["--config", "bad.toml", "hclass"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "validation");
    assert!(!tmp.path().join("lil-lab-out").exists());

    let out = lil_lab(tmp.path(), &["hclass", "--h", "(LL)^-1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = lil_lab(tmp.path(), &["nonsense"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("lil-lab-out").exists());
}

#[test]
fn report_needs_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir(tmp.path().join("empty")).unwrap();
    let out = lil_lab(tmp.path(), &["report", "empty"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["context"]["missing"].as_array().unwrap().len() == 5);
}

#[test]
fn spec_round_trip_reproduces_results() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lil_lab(
        tmp.path(),
        &["--seed", "17", "--format", "csv", "lil-sim", "--n-max", "3000", "--trials", "6"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let first = artifact(&tmp.path().join("lil-lab-out"), "lil-sim.json");
    assert_eq!(first["seed"], 17);
    let csv = std::fs::read_to_string(tmp.path().join("lil-lab-out/lil-sim.csv")).unwrap();
    assert!(csv.starts_with("# lil-lab lil-sim seed=17\n# spec="));
    assert_eq!(csv.lines().nth(2), Some("trial,n,ratio"));

    let out = lil_lab(
        tmp.path(),
        &["--config", "lil-lab-out/lil-sim.spec.toml", "--out", "again", "lil-sim"],
    );
    assert_eq!(out.status.code(), Some(0));
    let second = artifact(&tmp.path().join("again"), "lil-sim.json");
    assert_eq!(first["result"], second["result"]);

    lil_lab(tmp.path(), &["constants", "--h", "2*(LL)^1", "--H", "const:1"]);
    let out = lil_lab(tmp.path(), &["report", "lil-lab-out"]);
    assert_eq!(out.status.code(), Some(0));
    let summary = artifact(&tmp.path().join("lil-lab-out"), "summary.json");
    assert!(summary["lil"]["limsup"]["median"].is_number());
    assert!(tmp.path().join("lil-lab-out/plot.gp").is_file());
}

#[test]
fn fn_verify_small_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lil_lab(
        tmp.path(),
        &["--format", "csv", "fn-verify", "--n", "50", "--trials", "500", "--dist", "rademacher:3"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("lil-lab-out/fn-verify.csv")).unwrap();
    assert_eq!(csv.lines().nth(2), Some("kind,t,p_hat,se,bound,violation"));

    let out = lil_lab(tmp.path(), &["fn-verify", "--dist", "zero:2", "--norm", "2", "--trials", "50"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn single_artifact_summary_is_that_report() {
    let tmp = tempfile::tempdir().unwrap();
    lil_lab(tmp.path(), &["constants", "--h", "2*(LL)^1", "--H", "const:0.5"]);
    let out = lil_lab(tmp.path(), &["report", "lil-lab-out"]);
    assert_eq!(out.status.code(), Some(0));
    let dir = tmp.path().join("lil-lab-out");
    assert_eq!(artifact(&dir, "summary.json"), artifact(&dir, "constants.json"));
}
