use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use flexagg::fixtures::table_one;
use tempfile::TempDir;

fn flexagg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flexagg")).args(args).output().unwrap()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn csv_rows(p: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(p).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn generate_envelope_optimize_check() {
    let dir = TempDir::new().unwrap();
    let scen = path(&dir, "s.json");
    let env = path(&dir, "e.json");
    let o = flexagg(&["generate", "--n", "4", "--horizon", "6", "--seed", "11", "--out", &scen]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("seed: 11"));

    let o = flexagg(&["envelope", "--scenario", &scen, "--out", &env, "--linearize", "21"]);
    assert!(o.status.success(), "{o:?}");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&env).unwrap()).unwrap();
    assert_eq!(json["model"], "wc_envelope");
    assert_eq!(json["steps"].as_array().unwrap().len(), 5);

    for model in ["unaggregated", "wc_envelope_linear", "homothet", "zonotope"] {
        let out = path(&dir, &format!("{model}.csv"));
        let o = flexagg(&["optimize", "--scenario", &scen, "--model", model, "--objective", "cost", "--out", &out]);
        assert!(o.status.success(), "{model}: {o:?}");
        assert_eq!(csv_rows(Path::new(&out)).len(), 6);
    }

    let out = path(&dir, "check.csv");
    let o = flexagg(&["check", "--scenario", &scen, "--envelope", &env, "--samples", "50", "--out", &out]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("bracket errors: 0"));
    assert_eq!(csv_rows(Path::new(&out)).len(), 50);
}

#[test]
fn disaggregate_projects_an_infeasible_request() {
    let dir = TempDir::new().unwrap();
    let scen = path(&dir, "s.json");
    let env = path(&dir, "e.json");
    let req = path(&dir, "req.csv");
    let out = path(&dir, "out.csv");
    let agg = path(&dir, "agg.csv");
    fs::write(&scen, table_one().to_json()).unwrap();
    fs::write(&req, "k,energy_kwh\n0,2\n1,2\n2,4\n").unwrap();
    assert!(flexagg(&["envelope", "--scenario", &scen, "--out", &env]).status.success());

    let o = flexagg(&[
        "disaggregate",
        "--scenario",
        &scen,
        "--envelope",
        &env,
        "--request",
        &req,
        "--out",
        &out,
        "--aggregate-out",
        &agg,
    ]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert!(text.contains("projected: [2.0, 2.0, 3.0]"), "{text}");
    assert!(text.contains("rmse: 0.577350"), "{text}");
    assert_eq!(csv_rows(Path::new(&out)).len(), 6);
    let delivered: Vec<f64> = csv_rows(Path::new(&agg)).iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(delivered, vec![2.0, 2.0, 3.0]);
}

#[test]
fn bench_writes_rows_and_summary() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "bench.json");
    let out = path(&dir, "bench.csv");
    let summary = path(&dir, "summary.csv");
    fs::write(&cfg, r#"{"n_loads": [2, 3], "horizons": [4], "repetitions": 2, "seed": 5}"#).unwrap();
    let o = flexagg(&["bench", "--config", &cfg, "--out", &out, "--summary-out", &summary]);
    assert!(o.status.success(), "{o:?}");
    // 2 sizes x 2 repetitions x 4 models x 2 objectives
    assert_eq!(csv_rows(Path::new(&out)).len(), 32);
    assert_eq!(csv_rows(Path::new(&summary)).len(), 16);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(flexagg(&[]).status.code(), Some(2));
    assert_eq!(flexagg(&["generate", "--n", "x"]).status.code(), Some(2));
    let o = flexagg(&["optimize", "--scenario", "a", "--model", "bogus", "--objective", "cost", "--out", "b"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn domain_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "s.json");
    let o = flexagg(&["generate", "--n", "0", "--horizon", "4", "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    let o = flexagg(&["envelope", "--scenario", &path(&dir, "missing.json"), "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    let bad = path(&dir, "bad.json");
    fs::write(&bad, r#"{"n_loads": [2], "horizons": [4], "repetitions": 1, "typo": 1}"#).unwrap();
    let o = flexagg(&["bench", "--config", &bad, "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
}
