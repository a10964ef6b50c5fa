use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gcnet(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcnet"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn simulate(dir: &Path, out: &str, seed: &str) -> Output {
    gcnet(
        &["simulate", "--n", "5", "--p", "2", "--T", "600", "--seed", seed, "--out-dir", out],
        dir,
    )
}

#[test]
fn simulate_writes_expected_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate(tmp.path(), "a", "4");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let series = fs::read_to_string(tmp.path().join("a/series.csv")).unwrap();
    let rows: Vec<&str> = series.lines().collect();
    assert_eq!(rows.len(), 600);
    assert!(rows.iter().all(|r| r.split(',').count() == 5));
    let graph = fs::read_to_string(tmp.path().join("a/graph.txt")).unwrap();
    assert!(graph.starts_with("n 5"));
    // a strongly causal tree on 5 nodes
    assert_eq!(graph.lines().count(), 1 + 4);
    assert!(tmp.path().join("a/model.json").exists());
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(simulate(tmp.path(), "a", "9").status.success());
    assert!(simulate(tmp.path(), "b", "9").status.success());
    assert!(simulate(tmp.path(), "c", "10").status.success());
    let read = |d: &str| fs::read(tmp.path().join(d).join("series.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn pwgc_reports_against_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gcnet(
        &["simulate", "--n", "6", "--p", "1", "--T", "4000", "--seed", "2", "--out-dir", "sim"],
        tmp.path(),
    );
    assert!(out.status.success());
    let out = gcnet(
        &[
            "pwgc", "--input", "sim/series.csv", "--p-max", "4", "--truth", "sim/graph.txt",
            "--out-graph", "est.txt", "--dump-stats", "stats.csv", "--out-model", "fit.json",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let mcc: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("mcc "))
        .expect("mcc line")
        .parse()
        .unwrap();
    assert!((-1.0..=1.0).contains(&mcc));
    let stats = fs::read_to_string(tmp.path().join("stats.csv")).unwrap();
    assert_eq!(stats.lines().next(), Some("i,j,p_ij,F,P"));
    assert_eq!(stats.lines().count(), 1 + 6 * 5);
    assert!(fs::read_to_string(tmp.path().join("est.txt")).unwrap().starts_with("n 6"));
    assert!(tmp.path().join("fit.json").exists());
}

#[test]
fn alasso_runs_on_simulated_data() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(simulate(tmp.path(), "sim", "3").status.success());
    let out = gcnet(
        &["alasso", "--input", "sim/series.csv", "--p-max", "3", "--truth", "sim/graph.txt"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().contains("fdp "));
    assert!(tmp.path().join("graph.txt").exists());
}

#[test]
fn malformed_csv_exits_with_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.csv"), "1.0,2.0\n3.0,oops\n").unwrap();
    let out = gcnet(&["pwgc", "--input", "bad.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let out = gcnet(&["pwgc", "--input", "missing.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

const SMALL_BENCH: &str = r#"{
  "topologies": [{ "kind": "scg" }, { "kind": "dag", "q": 0.3 }],
  "n": 6,
  "p_true": 2,
  "p_max": 3,
  "t_values": [150],
  "algorithms": ["pwgc", "alasso"],
  "replicates": 2,
  "alpha": 0.05,
  "master_seed": 5,
  "t_out": 300
}"#;

#[test]
fn bench_rejects_empty_algorithm_list() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SMALL_BENCH.replace(r#"["pwgc", "alasso"]"#, "[]");
    fs::write(tmp.path().join("cfg.json"), cfg).unwrap();
    let out = gcnet(&["bench", "cfg.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_output_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("cfg.json"), SMALL_BENCH).unwrap();
    for (tag, threads) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let records = format!("rec_{tag}.csv");
        let summary = format!("sum_{tag}.csv");
        let out = gcnet(
            &["--threads", threads, "bench", "cfg.json", "--records", &records, "--summary", &summary],
            tmp.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |f: &str| fs::read(tmp.path().join(f)).unwrap();
    assert_eq!(read("rec_a.csv"), read("rec_b.csv"));
    assert_eq!(read("rec_a.csv"), read("rec_c.csv"));
    assert_eq!(read("sum_a.csv"), read("sum_c.csv"));
    // 2 topologies x 1 length x 2 algorithms x 2 replicates, plus a header
    assert_eq!(String::from_utf8(read("rec_a.csv")).unwrap().lines().count(), 9);
}

#[test]
fn check_oracle_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gcnet(&["check-oracle", "--trials", "6"], tmp.path());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.contains("trial")).count(), 6);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
}
