use std::path::Path;
use std::process::{Command, Output};

fn alrh(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alrh")).current_dir(dir).args(args).output().unwrap()
}

fn field(dir: &Path) {
    std::fs::write(dir.join("field.json"), r#"{"n_min": -3, "q": [[0,0],[0.1,0],[0.2,-0.1],[0.3,0.2],[0,0.15],[0.05,0],[0,0]]}"#)
        .unwrap();
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn scatter_then_reconstruct_recovers_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    field(d);
    let out = alrh(d, &["scatter", "--input", "field.json", "--N", "256", "--out", "rgrid.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let grid: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("rgrid.json")).unwrap()).unwrap();
    assert_eq!(grid["N"], 256);
    assert_eq!(grid["r"].as_array().unwrap().len(), 256);

    let out = alrh(d, &["rh-reconstruct", "--rgrid", "rgrid.json", "--n", "-3..3", "--t", "0", "--N", "256", "--out", "recon.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let expected = [(0.0, 0.0), (0.1, 0.0), (0.2, -0.1), (0.3, 0.2), (0.0, 0.15), (0.05, 0.0), (0.0, 0.0)];
    let got = rows(&d.join("recon.csv"));
    assert_eq!(got.len(), 7);
    for (row, (re, im)) in got.iter().zip(expected) {
        assert!((row[2] - re).abs() < 1e-8 && (row[3] - im).abs() < 1e-8, "{row:?}");
    }
}

#[test]
fn grid_size_mismatch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    field(d);
    assert!(alrh(d, &["scatter", "--input", "field.json", "--N", "128", "--out", "rgrid.json"]).status.success());
    let out = alrh(d, &["rh-reconstruct", "--rgrid", "rgrid.json", "--n", "0", "--t", "1", "--N", "256", "--out", "r.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evolve_and_predict_write_json() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    field(d);
    assert!(alrh(d, &["scatter", "--input", "field.json", "--N", "256", "--out", "rgrid.json"]).status.success());
    assert!(alrh(d, &["evolve-r", "--rgrid", "rgrid.json", "--t", "3", "--out", "later.json"]).status.success());
    let later: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("later.json")).unwrap()).unwrap();
    assert_eq!(later["t_ref"], 3.0);

    let out = alrh(d, &["zm-predict", "--rgrid", "rgrid.json", "--n", "-20", "--t", "100", "--out", "pred.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pred: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("pred.json")).unwrap()).unwrap();
    for key in ["geometry", "delta0_inv", "alpha", "delta_j0", "m1", "q_pred"] {
        assert!(pred.get(key).is_some(), "missing {key}");
    }
    let out = alrh(d, &["zm-predict", "--rgrid", "later.json", "--n", "0", "--t", "100", "--out", "p.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_and_fit_report_budgets_through_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("a.csv"), "n,t,re,im\n0,1,1,0\n0,2,0.5,0\n").unwrap();
    std::fs::write(d.join("b.csv"), "n,t,re,im\n0,2,0.5,0.001\n0,1,1,0\n").unwrap();
    assert!(alrh(d, &["compare", "a.csv", "b.csv", "--budget", "1e-2", "--out", "res.csv"]).status.success());
    assert_eq!(alrh(d, &["compare", "a.csv", "b.csv", "--budget", "1e-4"]).status.code(), Some(1));
    std::fs::write(d.join("c.csv"), "n,t,re,im\n0,1,1,0\n").unwrap();
    assert_eq!(alrh(d, &["compare", "a.csv", "c.csv"]).status.code(), Some(2));

    let mut decay = String::from("n,t,re,im\n");
    for t in [10.0f64, 20.0, 40.0, 80.0, 160.0] {
        decay.push_str(&format!("0,{t},{},0\n", 2.0 / t.sqrt()));
    }
    std::fs::write(d.join("decay.csv"), decay).unwrap();
    let out = alrh(d, &["fit-decay", "--input", "decay.csv", "--n", "0", "--expect", "-0.55,-0.45"]);
    assert!(out.status.success());
    let fit: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((fit["exponent"].as_f64().unwrap() + 0.5).abs() < 1e-12);
    assert_eq!(alrh(d, &["fit-decay", "--input", "decay.csv", "--expect", "-1.1,-0.9"]).status.code(), Some(1));
}

#[test]
fn simulate_and_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    field(d);
    let out = alrh(d, &["simulate", "--input", "field.json", "--t-end", "2", "--pad", "60", "--max-drift", "1e-8", "--out", "snap.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(d.join("snap.csv")).unwrap().starts_with("t,n,re,im\n"));

    std::fs::write(
        d.join("exp.json"),
        r#"{"field": {"kind": "file", "path": "field.json"}, "N": 256, "rays": [0.0, 1.5],
            "times": [1, 2, 3, 4, 5], "pipelines": ["simulate", "scatter", "rh"], "light_cone_margin": 40}"#,
    )
    .unwrap();
    let out = alrh(d, &["--sequential", "run", "exp.json"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("out/summary.json").exists());

    std::fs::write(
        d.join("exp.json"),
        r#"{"field": {"kind": "file", "path": "field.json"}, "N": 256, "rays": [], "times": [1, 2, 3],
            "pipelines": ["simulate", "scatter", "rh"], "light_cone_margin": 40, "output_dir": "quiet"}"#,
    )
    .unwrap();
    let out = alrh(d, &["run", "exp.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("quiet/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
}
