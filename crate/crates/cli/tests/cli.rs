//! End-to-end tests against the built binary: exit-code contract,
//! subcommand examples, and the determinism acceptance criterion
//! (same seed => byte-identical model JSON; benchmark tables invariant
//! under the thread count).

use std::path::Path;
use std::process::{Command, Output};

fn glamer(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glamer"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, content: &str) {
    std::fs::write(dir.join(name), content).unwrap();
}

/// Deterministic toy dataset: 3-level factor + continuous, exact linear
/// response y = 1 + [0, 1, 2][f] + 0.5 x (no noise).
fn toy_data(n: usize) -> String {
    let mut csv = String::from("f,x,y\n");
    for i in 0..n {
        let level = ["a", "b", "c"][i % 3];
        let effect = (i % 3) as f64;
        let x = (i as f64 * 0.37).sin();
        let y = 1.0 + effect + 0.5 * x;
        csv.push_str(&format!("{level},{x},{y}\n"));
    }
    csv
}

const SCHEMA: &str = "f,categorical\nx,continuous\n";

#[test]
fn criterion_10_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write(dir, "data.csv", &toy_data(60));
    write(dir, "schema.txt", SCHEMA);

    // same seed twice: byte-identical selected-model JSON
    for out in ["cv1", "cv2"] {
        let r = glamer(
            &[
                "cv",
                "--data",
                "data.csv",
                "--schema",
                "schema.txt",
                "--nlambda",
                "10",
                "--folds",
                "5",
                "--seed",
                "42",
                "--out",
                out,
            ],
            dir,
        );
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let m1 = std::fs::read(dir.join("cv1/model.json")).unwrap();
    let m2 = std::fs::read(dir.join("cv2/model.json")).unwrap();
    assert_eq!(m1, m2, "cv model JSON differs between identical runs");

    // benchmark tables bit-identical under different thread counts
    for (out, threads) in [("b1", "1"), ("b2", "3")] {
        let r = glamer(
            &[
                "bench",
                "--data",
                "data.csv",
                "--schema",
                "schema.txt",
                "--m-percent",
                "70",
                "--iterations",
                "4",
                "--nlambda",
                "8",
                "--select",
                "ric",
                "--seed",
                "9",
                "--threads",
                threads,
                "--out",
                out,
            ],
            dir,
        );
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let t1 = std::fs::read(dir.join("b1/bench.csv")).unwrap();
    let t2 = std::fs::read(dir.join("b2/bench.csv")).unwrap();
    assert_eq!(t1, t2, "bench table differs across --threads");
    let s1 = std::fs::read(dir.join("b1/bench_summary.json")).unwrap();
    let s2 = std::fs::read(dir.join("b2/bench_summary.json")).unwrap();
    assert_eq!(s1, s2, "bench summary differs across --threads");

    println!("criterion 10 determinism: PASS (identical model JSON and bench tables)");
}

#[test]
fn fit_full_model_on_toy_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write(dir, "data.csv", &toy_data(12));
    write(dir, "schema.txt", SCHEMA);
    let r = glamer(
        &[
            "fit", "--data", "data.csv", "--schema", "schema.txt", "--lambda", "0", "--tau", "0",
            "--out", "o",
        ],
        dir,
    );
    assert!(r.status.success());
    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("o/model.json")).unwrap()).unwrap();
    // lambda=0, tau=0, distinct effects: full model (intercept + 2 + 1)
    assert_eq!(model["md"], 4);
    assert!(dir.join("o/report.txt").exists());
}

#[test]
fn missing_schema_file_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write(dir, "data.csv", &toy_data(12));
    let r = glamer(
        &[
            "fit", "--data", "data.csv", "--schema", "nope.txt", "--lambda", "0", "--tau", "0",
        ],
        dir,
    );
    assert_eq!(r.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&r.stderr).contains("nope.txt"),
        "message should name the missing path"
    );
}

#[test]
fn negative_lambda_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write(dir, "data.csv", &toy_data(12));
    write(dir, "schema.txt", SCHEMA);
    let r = glamer(
        &[
            "fit",
            "--data",
            "data.csv",
            "--schema",
            "schema.txt",
            "--lambda=-0.5",
            "--tau",
            "0",
        ],
        dir,
    );
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn single_lambda_grid_degenerates() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write(dir, "data.csv", &toy_data(30));
    write(dir, "schema.txt", SCHEMA);
    let r = glamer(
        &[
            "path", "--data", "data.csv", "--schema", "schema.txt", "--nlambda", "1", "--seed",
            "1", "--out", "o",
        ],
        dir,
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(dir.join("o/path.csv")).unwrap();
    let indices: std::collections::HashSet<&str> = csv
        .lines()
        .skip(2)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(indices.len(), 1, "single-lambda grid: one lambda index");
}

#[test]
fn ric_constant_zero_selects_max_dimension() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write(dir, "data.csv", &toy_data(30));
    write(dir, "schema.txt", SCHEMA);
    let r = glamer(
        &[
            "path",
            "--data",
            "data.csv",
            "--schema",
            "schema.txt",
            "--nlambda",
            "10",
            "--select",
            "ric",
            "--ric-const",
            "0",
            "--seed",
            "1",
            "--out",
            "o",
        ],
        dir,
    );
    assert!(r.status.success());
    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("o/model.json")).unwrap()).unwrap();
    assert_eq!(model["md"], 4, "penalty-free RIC keeps the full model");
}

#[test]
fn predict_roundtrip_and_unseen_levels() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write(dir, "data.csv", &toy_data(30));
    write(dir, "schema.txt", SCHEMA);
    let r = glamer(
        &[
            "fit", "--data", "data.csv", "--schema", "schema.txt", "--lambda", "0", "--tau", "0",
            "--out", "o",
        ],
        dir,
    );
    assert!(r.status.success());

    // exact linear truth, lambda=0: predictions reproduce y
    let r = glamer(
        &[
            "predict",
            "--model",
            "o/model.json",
            "--data",
            "data.csv",
            "--out",
            "p",
        ],
        dir,
    );
    assert!(r.status.success());
    let preds = std::fs::read_to_string(dir.join("p/predictions.csv")).unwrap();
    let first: f64 = preds.lines().nth(2).unwrap().parse().unwrap();
    assert!((first - 1.0).abs() < 1e-8, "row 0: y = 1 + 0 + 0.5*sin(0)");

    // unseen level: exit 3 naming the level, unless mapped to reference
    write(dir, "new.csv", "f,x\nz,0.0\n");
    let r = glamer(
        &["predict", "--model", "o/model.json", "--data", "new.csv"],
        dir,
    );
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains('z'));
    let r = glamer(
        &[
            "predict",
            "--model",
            "o/model.json",
            "--data",
            "new.csv",
            "--map-unseen-to-reference",
            "--out",
            "p2",
        ],
        dir,
    );
    assert!(r.status.success());
    let preds = std::fs::read_to_string(dir.join("p2/predictions.csv")).unwrap();
    let v: f64 = preds.lines().nth(2).unwrap().parse().unwrap();
    assert!((v - 1.0).abs() < 1e-8, "reference level at x=0 predicts 1");
}

#[test]
fn fingerprint_mismatch_is_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write(dir, "data.csv", &toy_data(30));
    write(dir, "schema.txt", SCHEMA);
    let r = glamer(
        &[
            "fit", "--data", "data.csv", "--schema", "schema.txt", "--lambda", "0", "--tau", "0",
            "--out", "o",
        ],
        dir,
    );
    assert!(r.status.success());
    write(dir, "other.txt", "f,categorical,a|b|c|d\nx,continuous\n");
    let r = glamer(
        &[
            "predict",
            "--model",
            "o/model.json",
            "--data",
            "data.csv",
            "--schema",
            "other.txt",
        ],
        dir,
    );
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("fingerprint"));
}

#[test]
fn simulate_noiseless_recovery_is_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write(
        dir,
        "exp.json",
        r#"{
            "base": {
                "n": 80,
                "factors": [{"levels": 4, "assignment": [0, 0, 1, 1], "effects": [0.0, 5.0]}],
                "family": "gaussian",
                "sigma": 0.0,
                "balance": "balanced",
                "seed": 0
            },
            "replications": 1
        }"#,
    );
    let r = glamer(
        &[
            "simulate", "--spec", "exp.json", "--nlambda", "10", "--select", "ric", "--seed",
            "5", "--out", "o",
        ],
        dir,
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(dir.join("o/recovery.csv")).unwrap();
    let row = csv.lines().nth(2).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[4], "1", "noiseless, huge separation: exact recovery");
    assert_eq!(fields[1], "5", "delta column reports the true gap");
}

#[test]
fn bench_row_count_and_bad_percent() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write(dir, "data.csv", &toy_data(45));
    write(dir, "schema.txt", SCHEMA);
    let r = glamer(
        &[
            "bench",
            "--data",
            "data.csv",
            "--schema",
            "schema.txt",
            "--iterations",
            "2",
            "--nlambda",
            "6",
            "--select",
            "ric",
            "--seed",
            "3",
            "--out",
            "o",
        ],
        dir,
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(dir.join("o/bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "config line + header + 2 rows");

    let r = glamer(
        &[
            "bench",
            "--data",
            "data.csv",
            "--schema",
            "schema.txt",
            "--m-percent",
            "150",
            "--seed",
            "3",
        ],
        dir,
    );
    assert_eq!(r.status.code(), Some(2));
}
