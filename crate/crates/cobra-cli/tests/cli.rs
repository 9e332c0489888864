use std::path::Path;
use std::process::{Command, Output};

fn cobra(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cobra"))
        .args(args)
        .current_dir(dir)
        .env_remove("COBRA_SEED")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn gen_writes_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    ok(&cobra(
        dir.path(),
        &["gen", "friedman1", "--n", "30", "--d", "6", "--noise", "1.0", "--seed", "42", "--out", "data.csv"],
    ));
    let text = std::fs::read_to_string(dir.path().join("data.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,x2,x3,x4,x5,x6,y"));
    assert_eq!(lines.count(), 30);

    ok(&cobra(dir.path(), &["gen", "friedman1", "--n", "30", "--d", "6", "--noise", "1.0", "--seed", "42", "--out", "again.csv"]));
    assert_eq!(text, std::fs::read_to_string(dir.path().join("again.csv")).unwrap());
}

#[test]
fn seed_comes_from_environment_when_not_given() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, out: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_cobra"))
            .args(["gen", "moons", "--n", "20", "--d", "2", "--noise", "0.1", "--out", out])
            .current_dir(dir.path())
            .env("COBRA_SEED", seed)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read_to_string(dir.path().join(out)).unwrap()
    };
    assert_eq!(run("7", "a.csv"), run("7", "b.csv"));
    assert_ne!(run("7", "a.csv"), run("8", "c.csv"));
}

#[test]
fn bad_arguments_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cobra(dir.path(), &["gen", "spirals", "--n", "5", "--out", "x.csv"]).status.code(), Some(1));
    assert_eq!(cobra(dir.path(), &["bench", "rmse", "--config", "missing.json"]).status.code(), Some(1));
    assert_eq!(cobra(dir.path(), &["bench", "timing", "--sweep", "q=1"]).status.code(), Some(1));
    std::fs::write(dir.path().join("bad.json"), r#"{"datasets": [], "runs": 0}"#).unwrap();
    assert_eq!(cobra(dir.path(), &["bench", "rmse", "--config", "bad.json"]).status.code(), Some(1));
}

#[test]
fn tune_fit_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    ok(&cobra(dir.path(), &["gen", "friedman1", "--n", "120", "--noise", "1.0", "--seed", "3", "--out", "train.csv"]));
    let json = ok(&cobra(
        dir.path(),
        &["tune", "--data", "train.csv", "--grid", "lambda=0,0.5,2", "--folds", "3", "--table", "table.csv"],
    ));
    let result: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(result["best"]["lambda"].as_f64().unwrap() > 0.0);
    assert_eq!(std::fs::read_to_string(dir.path().join("table.csv")).unwrap().lines().count(), 4);

    ok(&cobra(dir.path(), &["fit", "--data", "train.csv", "--grid", "lambda=0.5,2", "--folds", "3", "--model-dir", "model"]));
    let points = "x1,x2,x3,x4,x5,x6,x7,x8,x9,x10\n0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,0.5\n0.9,0.8,0.7,0.6,0.5,0.4,0.3,0.2,0.1,0.5\n";
    std::fs::write(dir.path().join("points.csv"), points).unwrap();
    let out = ok(&cobra(dir.path(), &["predict", "--model-dir", "model", "--input", "points.csv"]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "prediction");
    assert_eq!(lines.len(), 3);
    assert!(lines[1..].iter().all(|l| l.parse::<f64>().unwrap().is_finite()));

    std::fs::write(dir.path().join("short.csv"), "x1,x2\n0.1,0.2\n").unwrap();
    assert_eq!(
        cobra(dir.path(), &["predict", "--model-dir", "model", "--input", "short.csv"]).status.code(),
        Some(2)
    );
}

#[test]
fn bench_rmse_writes_reproducible_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{
        "datasets": [{"name": "friedman", "source": "generator", "generator": "friedman1", "n": 120, "noise": 1.0}],
        "estimators": [{"kind": "kernelcobra", "tune": {"grids": ["lambda=0.1,1"], "folds": 3}}],
        "machines": [{"kind": "ridge"}, {"kind": "decision-tree"}],
        "runs": 2,
        "seed": 9
    }"#;
    std::fs::write(dir.path().join("bench.json"), config).unwrap();
    let table = ok(&cobra(dir.path(), &["bench", "rmse", "--config", "bench.json", "--out", "a"]));
    assert!(table.contains("kernelcobra"));
    ok(&cobra(dir.path(), &["bench", "rmse", "--config", "bench.json", "--out", "b"]));
    for file in ["report.json", "summary.csv", "errors.csv"] {
        let read = |sub: &str| std::fs::read(dir.path().join(sub).join(file)).unwrap();
        assert_eq!(read("a"), read("b"), "{file}");
    }
}

#[test]
fn failed_runs_exit_with_two_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{
        "datasets": [{"name": "friedman", "source": "generator", "generator": "friedman1", "n": 80, "noise": 1.0}],
        "estimators": [{"kind": "cobra", "config": {"epsilon": {"absolute": 1e-12}}}],
        "machines": [{"kind": "ridge"}, {"kind": "lasso"}],
        "runs": 2,
        "output_dir": "out"
    }"#;
    std::fs::write(dir.path().join("bench.json"), config).unwrap();
    let out = cobra(dir.path(), &["bench", "rmse", "--config", "bench.json"]);
    assert_eq!(out.status.code(), Some(2));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/failed_runs.json")).unwrap()).unwrap();
    assert_eq!(manifest.as_array().unwrap().len(), 2);
    assert!(manifest[0]["cause"].as_str().unwrap().contains("consensus"));
}

#[test]
fn timing_and_boundary_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("timing.json"),
        r#"{"datasets": [], "timing": {"n_fit": 30, "n_retained": 20, "queries": 4, "repetitions": 2}}"#,
    )
    .unwrap();
    let csv = ok(&cobra(dir.path(), &["bench", "timing", "--sweep", "d=5,20", "--config", "timing.json"]));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);

    ok(&cobra(dir.path(), &["gen", "moons", "--n", "120", "--d", "2", "--noise", "0.2", "--seed", "1", "--out", "moons.csv"]));
    ok(&cobra(
        dir.path(),
        &["bench", "boundary", "--data", "moons.csv", "--resolution", "4", "--lambda", "2", "--out", "grid.csv"],
    ));
    let grid = std::fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    assert_eq!(grid.lines().next(), Some("x1,x2,label"));
    assert_eq!(grid.lines().count(), 17);

    ok(&cobra(dir.path(), &["gen", "friedman1", "--n", "40", "--d", "5", "--out", "wide.csv"]));
    assert_eq!(
        cobra(dir.path(), &["bench", "boundary", "--data", "wide.csv", "--out", "g.csv"]).status.code(),
        Some(1)
    );
}

#[test]
fn aggregation_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    ok(&cobra(dir.path(), &["gen", "friedman1", "--n", "80", "--noise", "1.0", "--seed", "5", "--out", "train.csv"]));
    std::fs::write(dir.path().join("agg.json"), r#"{"lambda": 3.0}"#).unwrap();
    ok(&cobra(
        dir.path(),
        &[
            "fit", "--data", "train.csv", "--estimator", "general-kernel", "--config", "agg.json",
            "--kernel", "gaussian", "--bandwidth", "0.5", "--fallback", "uniform", "--model-dir", "model",
        ],
    ));
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("model/estimator.json")).unwrap()).unwrap();
    let config = &saved["config"];
    assert_eq!(config["lambda"].as_f64(), Some(3.0));
    assert_eq!(config["kernel"]["kind"], "gaussian");
    assert_eq!(config["kernel"]["bandwidth"].as_f64(), Some(0.5));
    assert_eq!(config["fallback"], "uniform");

    let bad = cobra(dir.path(), &["fit", "--data", "train.csv", "--bandwidth", "-1", "--model-dir", "m2"]);
    assert_eq!(bad.status.code(), Some(1));
    let bad = cobra(dir.path(), &["fit", "--data", "train.csv", "--fallback", "maybe", "--model-dir", "m3"]);
    assert_eq!(bad.status.code(), Some(1));
}
