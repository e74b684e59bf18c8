use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_adaptive-eigen");

const DIAGONAL: &str = r#"
eps_targets = [1e-2, 1e-4]
seed = 3

[model]
kind = "diagonal"
size = 40
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map(|rd| rd.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect())
        .unwrap_or_default();
    names.sort();
    names
}

#[test]
fn run_writes_one_result_row_per_target() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), DIAGONAL);
    let out = tmp.path().join("out");
    let o = run(&["run", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files_in(&out), ["results.csv", "summary.json", "trace.csv"]);
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 3);
    assert!(results.starts_with("eps,lambda,"));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary.is_object());
}

#[test]
fn identical_seeds_give_identical_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
eps_targets = [1e-2, 1e-3]
seed = 5

[model]
kind = "decay"
size = 64
"#,
    );
    let mut traces = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = run(&["run", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
        assert!(o.status.success());
        traces.push(std::fs::read(out.join("trace.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
    let out = tmp.path().join("c");
    run(&["run", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "--seed", "6"]);
    assert_ne!(traces[0], std::fs::read(out.join("trace.csv")).unwrap());
}

#[test]
fn malformed_config_exits_2_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for text in ["eps_targets = [1e-2\n", "eps_targets = [1e-4, 1e-2]\n[model]\nkind = \"diagonal\"\n", "eps_targets = [1e-2]\nunknown = 1\n[model]\n"] {
        let cfg = write_config(tmp.path(), text);
        let o = run(&["run", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(!out.exists());
    }
    let o = run(&["run", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn indefinite_model_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
eps_targets = [1e-2]

[model]
kind = "decay"
size = 32
d0 = 0.1
d1 = 0.0
coupling = 2.0
"#,
    );
    let out = tmp.path().join("out");
    let o = run(&["run", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn json_format_writes_parseable_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), DIAGONAL);
    let out = tmp.path().join("out");
    let o = run(&["run", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success());
    let results: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(results.as_array().unwrap().len(), 2);
    let trace: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("trace.json")).unwrap()).unwrap();
    assert!(!trace.as_array().unwrap().is_empty());
}

#[test]
fn report_fits_slopes_over_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
eps_targets = [1e-2, 1e-3, 1e-4, 1e-5]

[model]
kind = "decay"
size = 128
"#,
    );
    let out = tmp.path().join("out");
    assert!(run(&["run", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]).status.success());
    let results = out.join("results.csv");
    let o = run(&["report", results.to_str().unwrap(), "--known-s", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "quantity,slope,residual,reference,flagged");
    assert!(lines[1].starts_with("support,") && lines[2].starts_with("flops,"));
    let slope: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
    assert!(slope > 0.0);

    let o = run(&["report", results.to_str().unwrap(), "--format", "json"]);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["flops"]["slope"].is_number());

    let o = run(&["report", tmp.path().join("none.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_writes_reference_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "kind = \"tridiag\"\nsize = 16\n");
    let out = tmp.path().join("oracle");
    let o = run(&["oracle", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files_in(&out), ["a_dense.txt", "c_dense.txt", "eigenvector.txt", "oracle.csv"]);
    let csv = std::fs::read_to_string(out.join("oracle.csv")).unwrap();
    let lambda: f64 = csv.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    let closed = 1.0 - (std::f64::consts::PI / 17.0).cos();
    assert!((lambda - closed).abs() < 1e-12);
}
