use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_knn-mdp"));
    c.env_remove("KNN_MDP_OUT_DIR");
    c
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/d4.csv")
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

#[test]
fn select_writes_records_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["select", "--target", "y", "--rule", "mdp", "--rule", "gcv", "--format", "json"])
        .arg("--input")
        .arg(fixture())
        .arg("--out-dir")
        .arg(dir.path()));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let records: Vec<serde_json::Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0]["rule"], "mdp");
    // no --sigma: the estimate 11 is used and echoed
    assert_eq!(records[0]["sigma_sq_used"], 11.0);
    assert_eq!(records[0]["elapsed_ns"], serde_json::Value::Null);
    assert_eq!(std::fs::read_to_string(dir.path().join("selection.ndjson")).unwrap(), stdout);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("estimated noise variance = 11"), "{stderr}");

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["invocation"]["command"]["Select"]["seed"], 0);
}

#[test]
fn out_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .env("KNN_MDP_OUT_DIR", dir.path())
        .args(["-q", "select", "--target", "1", "--rule", "aic"])
        .arg("--input")
        .arg(fixture()));
    assert!(out.status.success());
    assert!(out.stderr.is_empty());
    assert!(dir.path().join("selection.csv").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let select = |extra: &[&str]| {
        run(bin()
            .args(["select", "--target", "y"])
            .args(extra)
            .arg("--input")
            .arg(fixture())
            .arg("--out-dir")
            .arg(dir.path()))
    };
    assert_eq!(select(&["--rule", "gcv", "--k-max", "1"]).status.code(), Some(2));
    assert_eq!(select(&["--rule", "mdp", "--k-start", "9"]).status.code(), Some(2));
    assert_eq!(select(&["--rule", "mdp", "--sigma", "1", "--estimate-sigma"]).status.code(), Some(2));
    assert_eq!(select(&["--rule", "oracle_bv"]).status.code(), Some(2));
    assert_eq!(select(&["--rule", "nonsense"]).status.code(), Some(2));
    assert_eq!(run(bin().args(["simulate", "--reps", "0"])).status.code(), Some(2));
    assert_eq!(run(bin().arg("frobnicate")).status.code(), Some(2));
}

#[test]
fn data_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x,y\n1,2\nfoo,3\n").unwrap();
    for (input, target) in [(bad.as_path(), "y"), (dir.path().join("none.csv").as_path(), "y"), (fixture().as_path(), "z")]
    {
        let out = run(bin()
            .args(["select", "--rule", "mdp", "--target", target])
            .arg("--input")
            .arg(input)
            .arg("--out-dir")
            .arg(dir.path()));
        assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let go = || {
        let out = run(bin()
            .args(["--quiet", "--threads", "2", "simulate", "--reps", "5", "--sizes", "50", "--seed", "3"])
            .arg("--out-dir")
            .arg(dir.path()));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (out.stdout, std::fs::read(dir.path().join("records.csv")).unwrap())
    };
    let first = go();
    assert_eq!(first, go());
    let summary = String::from_utf8(first.0).unwrap();
    assert!(summary.starts_with("rule,n,replications,mean_truth_loss"), "{summary}");
    assert_eq!(summary.lines().count(), 1 + 4);
}

#[test]
fn benchmark_reports_exact_scan_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["-q", "benchmark", "--n", "200", "--points", "5", "--repeats", "1"])
        .arg("--out-dir")
        .arg(dir.path()));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("benchmark.json")).unwrap()).unwrap();
    let k_start = table["k_start"].as_u64().unwrap();
    for row in table["rows"].as_array().unwrap() {
        assert_eq!(row["ks_evaluated"].as_u64().unwrap(), k_start - row["chosen_k"].as_u64().unwrap() + 1);
    }
    assert_eq!(table["gcv_ks_evaluated"].as_u64().unwrap(), k_start - 1);
}
