use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn qoracle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qoracle")).args(args).env("QORACLE_THREADS", "1").output().expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn glp_bound_matches_closed_form() {
    let v = json_of(&qoracle(&["bound", "glp", "--m", "3", "--delta", "0.1", "--g", "linear", "--C", "1"]));
    assert_eq!(v["result"]["N_min"], 3);
    assert_eq!(v["tool"], "qoracle");
    assert!(v["duration_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn standard_oracle_is_simple() {
    let v = json_of(&qoracle(&["classify", "--kind", "std", "--n", "1", "--m", "1"]));
    for key in ["simple", "basic", "nonentangled"] {
        assert_eq!(v["result"][key], true, "{key}");
    }
}

#[test]
fn minimal_oracle_is_not_simple_on_all_permutations() {
    let v = json_of(&qoracle(&["classify", "--kind", "min", "--n", "2", "--m", "2", "--domain", "perm"]));
    assert_eq!(v["result"]["simple"], false);
    assert_eq!(v["result"]["nonentangled"], true);
}

#[test]
fn eigensystem_and_csv() {
    let dir = TempDir::new().unwrap();
    let f = write(dir.path(), "perm.json", r#"{"n": 2, "m": 2, "table": [1, 0, 3, 2]}"#);
    let csv = dir.path().join("eig.csv");
    let out_path = dir.path().join("eig.json");
    let out = qoracle(&["oracle", "eig", "--kind", "min", "--fn", &f, "--csv", csv.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_slice(&std::fs::read(&out_path).unwrap()).unwrap();
    assert_eq!(v["result"]["eigensystem"]["phases"].as_array().unwrap().len(), 4);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn simulations_are_exact() {
    let dir = TempDir::new().unwrap();
    let f = write(dir.path(), "perm.json", r#"{"n": 2, "m": 2, "table": [2, 0, 1, 3]}"#);
    let v = json_of(&qoracle(&["simulate", "min-via-std", "--fn", &f, "--p-bound", "3"]));
    assert!(v["result"]["report"]["max_error"].as_f64().unwrap() < 1e-8);

    let v = json_of(&qoracle(&["simulate", "std-via-min", "--n", "2"]));
    assert!(v["result"]["report"]["max_error"].as_f64().unwrap() < 1e-8);
    assert_eq!(v["result"]["report"]["query_count"], 2);
}

#[test]
fn orbit_longer_than_bound_violates_the_contract() {
    let dir = TempDir::new().unwrap();
    let f = write(dir.path(), "perm.json", r#"{"n": 2, "m": 2, "table": [1, 2, 3, 0]}"#);
    let out = qoracle(&["simulate", "min-via-std", "--fn", &f, "--p-bound", "2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn degree_trace_and_bounds_on_a_saved_circuit() {
    let dir = TempDir::new().unwrap();
    let v = json_of(&qoracle(&["simulate", "std-via-min", "--n", "1"]));
    let circuit = write(dir.path(), "c.json", &v["result"]["circuit"].to_string());
    let f = write(dir.path(), "f.json", r#"{"n": 1, "m": 1, "table": [1, 0]}"#);

    let v = json_of(&qoracle(&["degree", "trace", "--circuit", &circuit, "--kind", "min", "--fn", &f]));
    assert!(v["result"]["final_degree"].as_u64().unwrap() <= 2);
    assert_eq!(v["passed"], true);

    let v = json_of(&qoracle(&["bound", "lemma1", "--circuit", &circuit, "--q1", "min", "--q2", "std", "--fn", &f]));
    assert!(v["result"]["bound"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn mainthm_on_adversary_pair() {
    let dir = TempDir::new().unwrap();
    let v = json_of(&qoracle(&["optimize", "--q1", "cp", "--q2", "std", "--n", "1", "--m", "2", "-N", "1", "--restarts", "2", "--iterations", "200", "--seed", "7"]));
    let circuit = write(dir.path(), "c.json", &v["result"]["circuit"].to_string());
    let err = v["result"]["best_error"].as_f64().unwrap();
    let b = json_of(&qoracle(&["bound", "mainthm", "--circuit", &circuit, "--q1", "cp", "--q2", "std", "--n", "1", "--m", "2"]));
    assert!(b["result"]["bound"].as_f64().unwrap() <= err + 1e-7);
}

#[test]
fn optimize_is_deterministic_per_seed() {
    let args = ["optimize", "--q1", "std", "--q2", "std", "--n", "1", "--m", "1", "-N", "1", "--restarts", "2", "--iterations", "100", "--seed", "3"];
    let a = json_of(&qoracle(&args));
    let b = json_of(&qoracle(&args));
    assert_eq!(a["result"], b["result"]);
    assert!(a["result"]["best_error"].as_f64().unwrap() < 1e-6);
}

#[test]
fn bernstein_ratio_is_at_most_degree() {
    let dir = TempDir::new().unwrap();
    let poly = write(dir.path(), "p.json", &poly_json());
    let v = json_of(&qoracle(&["bound", "bernstein", "--poly", &poly, "--theta1", "0.3", "--theta2", "0.31"]));
    assert!(v["result"]["ratio"].as_f64().unwrap() <= 2.0 + 1e-9);
    assert_eq!(v["result"]["degree"], 2);
}

fn poly_json() -> String {
    use qoracle::linalg::C64;
    use qoracle::trig::TrigPoly;
    let p = TrigPoly::monomial(1, vec![2], C64::new(0.5, 0.0))
        .unwrap()
        .add(&TrigPoly::monomial(1, vec![-1], C64::new(0.0, 0.3)).unwrap())
        .unwrap();
    serde_json::to_string(&p).unwrap()
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(qoracle(&["classify", "--kind", "std"]).status.code(), Some(2));
    assert_eq!(qoracle(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(qoracle(&["bound", "glp", "--m", "0", "--delta", "0.1", "--C", "1"]).status.code(), Some(2));
}
