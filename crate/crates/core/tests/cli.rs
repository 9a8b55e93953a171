mod common;

use std::fs;

use pars::cli::output::{read_requests_csv, read_summary};
use pars::workload::load_dataset;

use common::cli::{full_pipeline, pars, pars_ok, snapshot};

#[test]
fn pipeline_writes_every_expected_file() {
    let dir = tempfile::tempdir().unwrap();
    full_pipeline(dir.path());
    let files = snapshot(dir.path());
    for expected in [
        "w/dataset.jsonl",
        "w/trace.txt",
        "w/config.toml",
        "m/pars.json",
        "eval/eval.json",
        "sim/config.toml",
        "sim/trace/pars-seed0/requests.csv",
        "sim/trace/pars-seed0/summary.json",
        "sim/trace/pars-seed0/events.jsonl",
        "cmp/comparison.csv",
        "cmp/comparison.json",
        "cmp/burst-150/oracle-seed0/requests.csv",
        "sweep/poisson-x0.5/fcfs-seed2/summary.json",
        "sweep/poisson-x2/oracle-seed1/events.jsonl",
    ] {
        assert!(
            files.contains_key(std::path::Path::new(expected)),
            "missing {expected}"
        );
    }
    let ds = load_dataset(dir.path().join("w/dataset.jsonl"), None).unwrap();
    assert_eq!(ds.len(), 400);
    let rows =
        read_requests_csv(&dir.path().join("cmp/burst-150/oracle-seed0/requests.csv")).unwrap();
    assert_eq!(rows.len(), 150);
    let summary = read_summary(&dir.path().join("cmp/burst-150/pars-seed0/summary.json")).unwrap();
    assert!(summary.speedup_vs_fcfs.unwrap() > 1.0);
    assert!(summary.tau_b.unwrap() > 0.5);
    let fcfs = read_summary(&dir.path().join("cmp/burst-150/fcfs-seed0/summary.json")).unwrap();
    assert_eq!(fcfs.speedup_vs_fcfs, Some(1.0));
    assert_eq!(fcfs.tau_b, None);
}

#[test]
fn outputs_do_not_depend_on_the_working_directory() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    full_pipeline(a.path());
    full_pipeline(b.path());
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (path, bytes) in &sa {
        assert!(
            bytes == &sb[path],
            "{} differs between runs",
            path.display()
        );
    }
}

#[test]
fn config_file_values_apply_and_flags_override_them() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("exp.toml"),
        "seeds = [9]\n[workload]\nn = 30\nnoise = 0.2\n[simulation]\nbatch_limit = 4\n",
    )
    .unwrap();
    let stdout = pars_ok(
        dir.path(),
        &[
            "gen-workload",
            "--config",
            "exp.toml",
            "--n",
            "12",
            "--out",
            "w",
        ],
    );
    assert!(stdout.contains("n = 12"));
    assert!(stdout.contains("noise = 0.2"));
    assert!(stdout.contains("seeds = [9]"));
    let echoed = fs::read_to_string(dir.path().join("w/config.toml")).unwrap();
    assert!(echoed.contains("batch_limit = 4"));
    assert_eq!(
        load_dataset(dir.path().join("w/dataset.jsonl"), None)
            .unwrap()
            .len(),
        12
    );
    // The echoed config reproduces the run.
    pars_ok(
        dir.path(),
        &[
            "gen-workload",
            "--config",
            "w/config.toml",
            "--out",
            "w-again",
        ],
    );
    assert_eq!(
        fs::read(dir.path().join("w/dataset.jsonl")).unwrap(),
        fs::read(dir.path().join("w-again/dataset.jsonl")).unwrap()
    );
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = pars(
        dir.path(),
        &["train", "--data", "missing.jsonl", "--out", "m.json"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.jsonl"));

    fs::write(dir.path().join("bad.toml"), "[workload]\nbogus = 1\n").unwrap();
    let out = pars(
        dir.path(),
        &["gen-workload", "--config", "bad.toml", "--out", "w"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    pars_ok(dir.path(), &["gen-workload", "--out", "w", "--n", "20"]);
    let out = pars(
        dir.path(),
        &[
            "simulate",
            "--data",
            "w/dataset.jsonl",
            "--policy",
            "pars",
            "--out",
            "s",
        ],
    );
    assert!(
        !out.status.success(),
        "a learned policy without a model must fail"
    );
    let out = pars(
        dir.path(),
        &[
            "simulate",
            "--data",
            "w/dataset.jsonl",
            "--policy",
            "lifo",
            "--out",
            "s",
        ],
    );
    assert!(!out.status.success());
}

#[test]
fn degenerate_predictor_is_reported_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    pars_ok(dir.path(), &["gen-workload", "--out", "w", "--n", "50"]);
    // An untrained model scores everything 0.
    pars_ok(
        dir.path(),
        &[
            "train",
            "--data",
            "w/dataset.jsonl",
            "--out",
            "zero.json",
            "--epochs",
            "0",
        ],
    );
    let stdout = pars_ok(
        dir.path(),
        &[
            "eval-predictor",
            "--data",
            "w/dataset.jsonl",
            "--model",
            "zero.json",
            "--oracle",
        ],
    );
    assert!(stdout.contains("warning"), "{stdout}");
    assert!(stdout.contains("1.0000"), "{stdout}");
}
