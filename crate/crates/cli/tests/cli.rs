use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn mrf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrf")).current_dir(dir).args(args).output().expect("spawn mrf")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = mrf(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn edge_blocks_zero(fit: &serde_json::Value) -> bool {
    fit["model"]["theta_e"]
        .as_object()
        .unwrap()
        .values()
        .all(|b| b.as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap()).all(|v| v.as_f64() == Some(0.0)))
}

#[test]
fn gen_writes_shaped_files() {
    let t = TempDir::new().unwrap();
    ok(t.path(), &["gen", "--model", "gaussian", "--graph", "tree", "--d", "30", "--n", "100", "--seed", "7", "--out", "g"]);
    let rows = csv_rows(&t.path().join("g.csv"));
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().all(|r| r.len() == 30));
    assert_eq!(csv_rows(&t.path().join("g.edges")).len(), 29);
    assert_eq!(csv_rows(&t.path().join("g.omega.csv")).len(), 30);
    assert_eq!(json(&t.path().join("g.meta.json"))["seed"], 7);
}

#[test]
fn gen_is_deterministic() {
    let t = TempDir::new().unwrap();
    for p in ["a", "b"] {
        ok(t.path(), &["gen", "--model", "copula", "--d", "8", "--n", "50", "--holdout", "20", "--seed", "3", "--out", p]);
    }
    for ext in [".csv", ".holdout.csv", ".edges", ".omega.csv", ".meta.json"] {
        assert_eq!(fs::read(t.path().join(format!("a{ext}"))).unwrap(), fs::read(t.path().join(format!("b{ext}"))).unwrap());
    }
}

#[test]
fn usage_errors_exit_2() {
    let t = TempDir::new().unwrap();
    assert_eq!(mrf(t.path(), &["gen", "--d", "0", "--n", "10"]).status.code(), Some(2));
    assert_eq!(mrf(t.path(), &["gen", "--bogus"]).status.code(), Some(2));
    assert_eq!(mrf(t.path(), &["fit", "--method", "quasr", "--data", "missing.csv"]).status.code(), Some(2));
    assert_eq!(mrf(t.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn quasr_at_threshold_selects_nothing() {
    let t = TempDir::new().unwrap();
    ok(t.path(), &["gen", "--model", "copula", "--d", "5", "--n", "200", "--seed", "1", "--out", "c"]);
    ok(t.path(), &["fit", "--method", "quasr", "--data", "c.csv", "--lambda-count", "3", "--out", "p.json"]);
    let start = json(&t.path().join("p.json.diag.json"))["lambda_start"].as_f64().unwrap();
    let s = format!("{start:e}");
    ok(t.path(), &["fit", "--method", "quasr", "--data", "c.csv", "--lambda", &s, "--out", "q.json"]);
    let m = json(&t.path().join("q.json"));
    let fit = &m["fits"][0];
    assert!(edge_blocks_zero(fit));
    assert!(fit["model"]["theta_v"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap()).all(|v| v.as_f64() == Some(0.0)));
    let p = json(&t.path().join("p.json"));
    assert!(!edge_blocks_zero(&p["fits"][2]));
}

#[test]
fn gauss_on_independent_data_is_near_diagonal() {
    let t = TempDir::new().unwrap();
    ok(t.path(), &["gen", "--graph", "er", "--edge-prob", "0", "--d", "5", "--n", "5000", "--seed", "2", "--out", "i"]);
    ok(t.path(), &["fit", "--method", "gauss", "--standardize", "--data", "i.csv", "--lambda", "0.1", "--out", "g.json"]);
    let m = json(&t.path().join("g.json"));
    let off = m["fits"][0]["model"]["theta_e"]
        .as_object()
        .unwrap()
        .values()
        .map(|b| b[0][0].as_f64().unwrap().abs())
        .fold(0.0, f64::max);
    assert!(off < 0.05, "{off}");
    assert_eq!(m["method"], "gauss");
    assert!(m["center"].is_array() && m["scale"].is_array());
}

#[test]
fn trw_above_threshold_has_no_edges() {
    let t = TempDir::new().unwrap();
    ok(t.path(), &["gen", "--model", "copula", "--d", "3", "--n", "100", "--seed", "4", "--out", "c"]);
    ok(t.path(), &["fit", "--method", "trw", "--data", "c.csv", "--grid", "32", "--lambda", "100", "--out", "t.json"]);
    let m = json(&t.path().join("t.json"));
    assert!(edge_blocks_zero(&m["fits"][0]));
    assert_eq!(m["alpha"].as_array().unwrap().len(), 3);
}

fn write_quasr_model(path: &Path, edge_value: f64) {
    let doc = serde_json::json!({
        "format": "mrf-model", "version": 1, "method": "quasr",
        "d": 3, "m1": 1, "m2": 1, "edges": [[0, 1], [0, 2], [1, 2]], "seed": 0, "grid": 32,
        "fits": [{
            "lambda": 0.5, "iterations": 0, "objective": 0.0,
            "model": {
                "d": 3, "m1": 1, "m2": 1, "edges": [[0, 1], [0, 2], [1, 2]],
                "theta_v": [[0.0], [0.0], [0.0]],
                "theta_e": {"0-1": [[edge_value]], "0-2": [[0.0]], "1-2": [[0.0]]}
            }
        }]
    });
    fs::write(path, serde_json::to_string(&doc).unwrap()).unwrap();
}

#[test]
fn roc_and_eval_reports() {
    let t = TempDir::new().unwrap();
    write_quasr_model(&t.path().join("m.json"), 0.7);
    fs::write(t.path().join("truth.edges"), "i,j\n0,1\n").unwrap();
    ok(t.path(), &["roc", "--model", "m.json", "--truth", "truth.edges"]);
    let rows = csv_rows(&t.path().join("roc.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 1.0);
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), 1.0);

    write_quasr_model(&t.path().join("z.json"), 0.0);
    fs::write(t.path().join("u.csv"), "x0,x1,x2\n0.1,0.5,0.9\n0.3,0.2,0.7\n").unwrap();
    ok(t.path(), &["eval", "--model", "z.json", "--data", "u.csv", "--out", "e.csv"]);
    let rows = csv_rows(&t.path().join("e.csv"));
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 0.0);
    assert_eq!(rows[0][2], "exact");

    fs::write(t.path().join("w.csv"), "x0,x1\n0.1,0.5\n").unwrap();
    assert_eq!(mrf(t.path(), &["eval", "--model", "z.json", "--data", "w.csv"]).status.code(), Some(2));
}

#[test]
fn eval_has_one_row_per_path_fit() {
    let t = TempDir::new().unwrap();
    ok(t.path(), &["gen", "--model", "copula", "--d", "4", "--n", "150", "--holdout", "60", "--seed", "5", "--out", "c"]);
    ok(t.path(), &[
        "path", "--method", "quasr", "--data", "c.csv", "--holdout", "c.holdout.csv", "--truth", "c.edges",
        "--lambda-count", "6", "--grid", "32", "--out", "p.json",
    ]);
    assert_eq!(csv_rows(&t.path().join("p.json.eval.csv")).len(), 6);
    assert_eq!(csv_rows(&t.path().join("p.json.roc.csv")).len(), 6);
    let m = json(&t.path().join("p.json"));
    assert!(m["selected"].as_u64().unwrap() < 6);
    assert_eq!(m["holdout_scores"].as_array().unwrap().len(), 6);
}

#[test]
fn thread_count_does_not_change_output() {
    let t = TempDir::new().unwrap();
    ok(t.path(), &["gen", "--model", "copula", "--d", "4", "--n", "120", "--seed", "9", "--out", "c"]);
    let fit = |threads: &str, out: &str| {
        ok(t.path(), &[
            "--threads", threads, "fit", "--method", "trw", "--data", "c.csv", "--grid", "24", "--lambda-count", "3",
            "--n-trees", "10", "--m1", "2", "--m2", "1", "--out", out,
        ]);
        fs::read(t.path().join(out)).unwrap()
    };
    assert_eq!(fit("1", "a.json"), fit("4", "b.json"));
}

#[test]
fn numerical_failure_exits_3_with_diagnostics() {
    let t = TempDir::new().unwrap();
    ok(t.path(), &["gen", "--model", "copula", "--d", "3", "--n", "100", "--seed", "6", "--out", "c"]);
    let out = mrf(t.path(), &[
        "fit", "--method", "trw", "--data", "c.csv", "--grid", "24", "--bp-max-iter", "3", "--bp-tol", "0", "--lambda", "1e-6", "--out", "f.json",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let diag: PathBuf = t.path().join("f.json.diag.json");
    assert!(json(&diag)["failure"]["reason"].as_str().unwrap().contains("converge"));
}
