use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn stolab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stolab")).args(args).current_dir(cwd).output().unwrap()
}

/// Writes `config.toml` into a fresh directory and runs it into `out/`.
fn run_config(toml: &str) -> (TempDir, PathBuf, Output) {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("config.toml"), toml).unwrap();
    let out = tmp.path().join("out");
    let o = stolab(&["run", "config.toml", "--output-dir", out.to_str().unwrap()], tmp.path());
    (tmp, out, o)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn column(csv_path: &Path, name: &str) -> Vec<f64> {
    let mut rdr = csv::Reader::from_path(csv_path).unwrap();
    let idx = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn stability_check_manifest_reports_norms() {
    let (_tmp, out, o) = run_config("experiment = \"stability-check\"\ndelta = 0.2\n[map]\nname = \"linear-k\"\nk = 5\n[coupling]\nname = \"sincos\"\n");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_json(&out.join("manifest.json"));
    let s = &m["derived"]["stability"];
    assert!((s["norm_d1"].as_f64().unwrap() - 4.0).abs() < 1e-6);
    assert!((s["norm_d2"].as_f64().unwrap() - 8.0 * PI).abs() < 1e-6);
    assert_eq!(s["satisfied"], Value::Bool(true));
    assert!(m["version"].is_string());
    assert!(out.join("trace.csv").exists() && out.join("report.json").exists());
}

#[test]
fn uncoupled_iteration_converges_with_decreasing_residual() {
    let toml = "experiment = \"sto-iterate\"\ndelta = 0.0\n[cone]\na = 10.0\n[init]\ncos = [0.0, 0.0, 0.0, 0.0, 0.3]\n";
    let (_tmp, out, o) = run_config(toml);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_json(&out.join("report.json"))["converged"], Value::Bool(true));
    let r = column(&out.join("trace.csv"), "sup_residual");
    assert!(r.len() >= 3, "{r:?}");
    assert!(r.windows(2).all(|w| w[1] < w[0]), "{r:?}");
}

#[test]
fn missing_delta_is_reported_by_name() {
    let (_tmp, out, o) = run_config("experiment = \"stability-check\"\n");
    assert_eq!(o.status.code(), Some(2));
    let stderr: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(stderr["field"], "delta");
    let err = read_json(&out.join("error.json"));
    assert_eq!(err["error"], "config");
    assert_eq!(err["field"], "delta");
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn unknown_experiment_is_a_config_error() {
    let (_tmp, _out, o) = run_config("experiment = \"teleport\"\ndelta = 0.1\n");
    assert_eq!(o.status.code(), Some(2));
    let stderr: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(stderr["field"], "teleport");
}

#[test]
fn cone_escape_is_a_runtime_error() {
    let toml = "experiment = \"sto-iterate\"\ndelta = -0.155\n[cone]\na = 1.0\n[noise]\nDelta = \"auto\"\ngamma = 0.02\n";
    let (_tmp, out, o) = run_config(toml);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(read_json(&out.join("error.json"))["error"], "cone-escape");
    assert!(out.join("manifest.json").exists());
}

#[test]
fn list_prints_eight_rows_in_both_forms() {
    let tmp = TempDir::new().unwrap();
    let text = stolab(&["list"], tmp.path());
    assert!(text.status.success());
    let lines: Vec<String> = String::from_utf8(text.stdout).unwrap().lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 8);

    let json = stolab(&["list", "--json"], tmp.path());
    assert!(json.status.success());
    let rows: Vec<Value> = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(rows.len(), 8);
    for (row, line) in rows.iter().zip(&lines) {
        let name = row["name"].as_str().unwrap();
        assert!(line.starts_with(name));
        assert!(line.contains(row["description"].as_str().unwrap()));
        for key in row["required"].as_array().unwrap() {
            assert!(line.contains(key.as_str().unwrap()));
        }
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let o = stolab(&["list", "--yaml"], tmp.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn manifest_rerun_reproduces_csv_bit_identically() {
    let toml = "experiment = \"ensemble\"\ndelta = -0.155\nseed = 11\n[noise]\nDelta = \"auto\"\ngamma = 0.05\n[chain]\nN = 300\nT_max = 200\nrecord_every = 5\n";
    let (tmp, out, o) = run_config(toml);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = read_json(&out.join("manifest.json"));
    assert!(manifest["config"]["noise"]["Delta"].is_f64());

    let again = tmp.path().join("again");
    let o = stolab(&["run", out.join("manifest.json").to_str().unwrap(), "--output-dir", again.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["trace.csv", "final_state.csv"] {
        assert_eq!(fs::read(out.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name}");
    }
    let rerun = read_json(&again.join("manifest.json"));
    assert_eq!(manifest["config"]["noise"], rerun["config"]["noise"]);
}

#[test]
fn lln_rerun_is_reproducible() {
    let toml = "experiment = \"lln\"\ndelta = 0.1\nseed = 4\n[chain]\nN_list = [100, 1000]\nreplicas = 3\n[init]\nsin = [0.3]\n";
    let (tmp, out, o) = run_config(toml);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let again = tmp.path().join("again");
    let o = stolab(&["run", out.join("manifest.json").to_str().unwrap(), "--output-dir", again.to_str().unwrap()], tmp.path());
    assert!(o.status.success());
    assert_eq!(fs::read(out.join("trace.csv")).unwrap(), fs::read(again.join("trace.csv")).unwrap());
}

#[test]
fn artifacts_stay_inside_output_dir() {
    let toml = "experiment = \"dirac-basin\"\ndelta = -0.155\noutput_dir = \"results/basin\"\n[chain]\nN = 100\n[run]\nepsilon = 0.01\nsteps = 30\n";
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("config.toml"), toml).unwrap();
    let o = stolab(&["run", "config.toml"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut top: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    top.sort();
    assert_eq!(top, ["config.toml", "results"]);
    let mut files: Vec<_> =
        fs::read_dir(tmp.path().join("results/basin")).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    assert_eq!(files, ["manifest.json", "report.json", "trace.csv"]);
    let d = column(&tmp.path().join("results/basin/trace.csv"), "dW_to_dirac0");
    assert!(d[30] < d[0]);
}

#[test]
fn every_experiment_runs_on_a_small_config() {
    let configs = [
        "experiment = \"hilbert-validate\"\n[cone]\na = 2.0\n[run]\npairs = 3\nbeta_steps = 1000\n",
        "experiment = \"order-check\"\ndelta = 0.1\n[cone]\na = 0.5\n[run]\npairs = 5\nsamples = 5\n",
        "experiment = \"metastable\"\ndelta = -0.155\n[noise]\nDelta = \"auto\"\ngamma = 0.05\n[chain]\nN_list = [2, 3]\nT_max = 100000\nreplicas = 8\n",
    ];
    for toml in configs {
        let (_tmp, out, o) = run_config(toml);
        assert!(o.status.success(), "{toml}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("trace.csv").exists() && out.join("report.json").exists());
    }
}
