use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mcrkit"));
    c.env_remove("MCRKIT_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn schemas_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

fn assert_schema(name: &str, doc: &Value) {
    let text = std::fs::read_to_string(schemas_dir().join(format!("{name}.schema.json"))).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

/// Rows `(y, a, b)` with y close to a + 2 b.
fn write_fixture(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("d.csv");
    let mut s = String::from("y,a,b\n");
    let mut state: u64 = 12345;
    let mut unif = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    for _ in 0..n {
        let a = 3.0 * unif();
        let b = 0.4 * a + 3.0 * unif();
        let y = a + 2.0 * b + unif();
        s.push_str(&format!("{y:.6},{a:.6},{b:.6}\n"));
    }
    std::fs::write(&path, s).unwrap();
    path
}

#[test]
fn mr_matches_pairwise_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.csv");
    std::fs::write(&path, "y,a,b\n1,0,1\n2,1,0\n0.5,2,2\n3,-1,1\n").unwrap();
    let out = json_of(&run(&["mr", "--data", path.to_str().unwrap(), "--x1", "a", "--set", "beta=0.5,1", "--set", "beta0=0.25"]));
    assert_schema("mr", &out);
    let rows = [(1.0, 0.0, 1.0), (2.0, 1.0, 0.0), (0.5, 2.0, 2.0), (3.0, -1.0, 1.0)];
    let f = |a: f64, b: f64| 0.25 + 0.5 * a + b;
    let n = rows.len() as f64;
    let eo: f64 = rows.iter().map(|(y, a, b)| (y - f(*a, *b)).powi(2)).sum::<f64>() / n;
    let mut es = 0.0;
    for (i, (y, _, b)) in rows.iter().enumerate() {
        for (j, (_, a, _)) in rows.iter().enumerate() {
            if i != j {
                es += (y - f(*a, *b)).powi(2);
            }
        }
    }
    es /= n * (n - 1.0);
    let r = &out["result"];
    assert!((r["e_orig"].as_f64().unwrap() - eo).abs() < 1e-12);
    assert!((r["e_switch"].as_f64().unwrap() - es).abs() < 1e-12);
    assert!((r["mr"].as_f64().unwrap() - es / eo).abs() < 1e-12);
    assert_eq!(out["config"]["beta"], "0.5,1");
}

#[test]
fn malformed_csv_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "y,a,b\n1,2,3\n4,oops,6\n").unwrap();
    let out = run(&["mr", "--data", path.to_str().unwrap(), "--x1", "a", "--set", "beta=1,1"]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["category"], "data");
    let msg = err["error"]["message"].as_str().unwrap();
    assert!(msg.contains("row 2") && msg.contains("`a`") && msg.contains("oops"), "{msg}");
    let missing = run(&["mr", "--data", "/nonexistent/file.csv", "--x1", "a", "--set", "beta=1,1"]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path(), 40);
    let d = data.to_str().unwrap();
    assert_eq!(run(&["mr", "--data", d, "--x1", "a"]).status.code(), Some(2));
    assert_eq!(run(&["causal-check", "--set", "nonsense=1"]).status.code(), Some(2));
    assert_eq!(run(&["mcr-curve", "--data", d, "--x1", "a", "--class", "lasso"]).status.code(), Some(2));
    assert_eq!(run(&["bootstrap-ci", "--data", d, "--x1", "a", "--mode", "difference"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path(), 40);
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, format!("# settings\ndata = {}\nx1 = a\nbeta = 1,2\nmode = difference\n", data.display())).unwrap();
    let out = json_of(&run(&["mr", "--config", cfg.to_str().unwrap(), "--mode", "ratio"]));
    assert_eq!(out["config"]["mode"], "ratio");
    let r = &out["result"];
    let ratio = r["e_switch"].as_f64().unwrap() / r["e_orig"].as_f64().unwrap();
    assert!((r["mr"].as_f64().unwrap() - ratio).abs() < 1e-12);
}

#[test]
fn mcr_curve_is_nested_and_brackets_reference() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path(), 80);
    let out = json_of(&run(&[
        "mcr-curve", "--data", data.to_str().unwrap(), "--x1", "a", "--class", "ridge",
        "--set", "ridge_r=20", "--set", "curve_points=4",
    ]));
    assert_schema("mcr-curve", &out);
    let r = &out["result"];
    let reference = r["pipeline"]["reference"]["reliance"].as_f64().unwrap();
    let curve = r["curve"].as_array().unwrap();
    assert_eq!(curve.len(), 4);
    let mut prev = (f64::INFINITY, f64::NEG_INFINITY);
    for p in curve {
        let (lo, hi) = (p["lower"].as_f64().unwrap(), p["upper"].as_f64().unwrap());
        assert!(lo <= reference + 1e-9 && reference <= hi + 1e-9, "{p}");
        assert!(lo <= prev.0 + 1e-12 && hi >= prev.1 - 1e-12);
        prev = (lo, hi);
    }
    assert!(!r["probes"].as_array().unwrap().is_empty());
}

#[test]
fn outputs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path(), 60);
    let args = ["bootstrap-ci", "--data", data.to_str().unwrap(), "--x1", "a", "--set", "bootstrap_reps=30", "--seed", "7"];
    let a = bin().args(args).args(["--threads", "1"]).output().unwrap();
    let b = bin().args(args).env("MCRKIT_THREADS", "4").output().unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let doc: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_schema("bootstrap-ci", &doc);
    assert_eq!(doc["seed"], 7);
    assert!(doc["config"].get("threads").is_none());
    let r = &doc["result"];
    assert!(r["lower"].as_f64().unwrap() <= r["upper"].as_f64().unwrap());
}

#[test]
fn output_file_and_remaining_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path(), 60);
    let d = data.to_str().unwrap();
    let phi_path = dir.path().join("phi.json");
    let out = run(&[
        "phi-ci", "--data", d, "--x1", "a", "--class", "ridge", "--set", "ridge_r=20", "--set", "intercept=false",
        "--set", "phi_point=1,1", "--output", phi_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let phi: Value = serde_json::from_str(&std::fs::read_to_string(&phi_path).unwrap()).unwrap();
    assert_schema("phi-ci", &phi);
    let iv = &phi["result"]["interval"];
    assert!(iv["lower"].as_f64().unwrap() <= iv["upper"].as_f64().unwrap());

    let rk = json_of(&run(&["phi-ci", "--data", d, "--x1", "a", "--class", "rkhs", "--set", "phi_point=0,0", "--set", "phi_samples=50"]));
    assert_schema("phi-ci", &rk);
    assert_eq!(rk["result"]["interval"]["method"]["kind"], "sample_approximation");
    assert!(rk["result"]["pipeline"]["selection"]["sigma"].as_f64().unwrap() > 0.0);

    let causal = json_of(&run(&["causal-check", "--set", "n_mc=20000"]));
    assert_schema("causal-check", &causal);
    assert_eq!(causal["result"]["rhs"], 0.25);

    let table = dir.path().join("cov.csv");
    let cov = json_of(&run(&[
        "simulate-coverage", "--set", "reps=2", "--set", "bootstrap_reps=5", "--set", "n=60",
        "--set", "population_size=500", "--set", "gammas=0", "--set", &format!("table={}", table.display()),
    ]));
    assert_schema("simulate-coverage", &cov);
    let text = std::fs::read_to_string(&table).unwrap();
    assert!(text.starts_with("# mcrkit simulate-coverage\n"));
    assert!(text.contains("# seed=0\n"));
    assert!(text.contains("gamma,target,n,reps,coverage,mean_width\n"));
}
