use std::path::Path;
use std::process::{Command, Output};

use lossyboson::linalg::{sample_gaussian_matrix, ComplexMatrix, Seed};
use lossyboson::permanent::permanent_naive;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lossyboson")).args(args).env_remove("LOSSYBOSON_SEED").output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn permanent_from_matrix_file() {
    let dir = tempfile::tempdir().unwrap();
    let m = sample_gaussian_matrix(5, 5, Seed::new(9));
    let path = write(dir.path(), "m.json", &serde_json::to_string(&m).unwrap());
    let v = json(&run(&["permanent", "--matrix-file", &path]));
    let expected = permanent_naive(&m).unwrap();
    assert!((v["re"].as_f64().unwrap() - expected.re).abs() < 1e-10 * expected.abs_squared.sqrt());
    assert!((v["abs_squared"].as_f64().unwrap() - expected.abs_squared).abs() < 1e-10 * expected.abs_squared);

    let ones = write(dir.path(), "ones.json", r#"{"rows":3,"cols":3,"re":[1,1,1,1,1,1,1,1,1],"im":[0,0,0,0,0,0,0,0,0]}"#);
    assert!((json(&run(&["permanent", "--matrix-file", &ones]))["re"].as_f64().unwrap() - 6.0).abs() < 1e-12);
}

#[test]
fn malformed_input_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{\"rows\": 2, \"cols\": 2, \"re\": [1, 2");
    let short = write(dir.path(), "short.json", r#"{"rows":2,"cols":2,"re":[1,2,3],"im":[0,0,0]}"#);
    for args in [
        vec!["permanent", "--matrix-file", bad.as_str()],
        vec!["permanent", "--matrix-file", short.as_str()],
        vec!["permanent", "--n", "25"],
        vec!["sweep", "--config", bad.as_str()],
        vec!["reduce", "--n", "3", "--delta", "0"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty());
        let stderr = String::from_utf8(out.stderr).unwrap();
        assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
    }
}

#[test]
fn numerical_failure_exits_3() {
    let out = run(&["reduce", "--n", "2", "--k", "3", "--delta", "0.000001"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
}

#[test]
fn seed_environment_override() {
    let with_env = Command::new(env!("CARGO_BIN_EXE_lossyboson"))
        .args(["phi", "--model", "dark", "--n", "3", "--k", "1", "--seed", "1"])
        .env("LOSSYBOSON_SEED", "42")
        .output()
        .unwrap();
    let direct = run(&["phi", "--model", "dark", "--n", "3", "--k", "1", "--seed", "42"]);
    assert!(with_env.status.success());
    assert_eq!(with_env.stdout, direct.stdout);
    assert_ne!(direct.stdout, run(&["phi", "--model", "dark", "--n", "3", "--k", "1", "--seed", "1"]).stdout);
}

#[test]
fn sample_lines_are_occupations() {
    let out = run(&["sample", "--m", "5", "--n", "2", "--k", "1", "--draws", "30", "--seed", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 30);
    for line in text.lines() {
        let occ: Vec<usize> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(occ.len(), 5);
        assert_eq!(occ.iter().sum::<usize>(), 2);
    }
}

#[test]
fn reduce_report_fields() {
    let v = json(&run(&["reduce", "--n", "4", "--k", "1", "--noise", "adversarial", "--epsilon", "0.3", "--seed", "5"]));
    for field in ["estimate", "variance_bound", "gautschi_norm_bound", "nodes", "oracle_values", "succeeded", "error_units_nfact"] {
        assert!(!v[field].is_null(), "{field}");
    }
    assert_eq!(v["oracle_values"].as_array().unwrap().len(), 2);
    assert!(v["abs_error"].as_f64().unwrap() <= v["chebyshev_envelope"].as_f64().unwrap());
}

#[test]
fn sweep_writes_csv_atomically() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "cfg.json",
        r#"[{"n": 3, "k": 1, "noise": "uniform", "epsilon": 0.3, "trials": 4, "seed": 1},
            {"n": 2, "k": 1, "nodes": 1, "trials": 2}]"#,
    );
    let out_path = dir.path().join("rows.csv");
    let out = run(&["sweep", "--config", &config, "--jobs", "2", "--format", "csv", "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "nodes below degree + 1 is rejected up front");
    assert!(!out_path.exists());

    let config = write(dir.path(), "cfg.json", r#"[{"n": 3, "k": 1, "noise": "uniform", "epsilon": 0.3, "trials": 4, "seed": 1}]"#);
    let out = run(&["sweep", "--config", &config, "--jobs", "2", "--format", "csv", "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&out_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,k,epsilon,delta,seed,trial,estimate,truth,abs_err,err_units_nfact,success"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 5);
    assert!(text.contains("# cell=0 n=3 k=1"));

    let v = json(&run(&["sweep", "--config", &config, "--format", "json"]));
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
    assert_eq!(v["summary"][0]["trials"], 4);
}

#[test]
fn phi_matrix_file_shape_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    let m = ComplexMatrix::identity(3);
    let path = write(dir.path(), "i.json", &serde_json::to_string(&m).unwrap());
    assert_eq!(run(&["phi", "--model", "input", "--n", "3", "--k", "1", "--matrix-file", &path]).status.code(), Some(2));
    let v = json(&run(&["phi", "--model", "input", "--n", "3", "--k", "0", "--matrix-file", &path]));
    assert!((v["phi"].as_f64().unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn scaled_gaussian_distance_report() {
    let v = json(&run(&["verify-lemma1", "--n", "3", "--k", "1", "--c", "0.95", "--trials", "20000", "--seed", "2"]));
    assert_eq!(v["within_bound"], true);
    assert!(v["tv_estimate"].as_f64().unwrap() <= v["pinsker_bound"].as_f64().unwrap() + 3.0 * v["tv_stderr"].as_f64().unwrap());
    assert_eq!(run(&["verify-lemma1", "--n", "3", "--k", "1", "--c", "0.95", "--trials", "10"]).status.code(), Some(2));
}
