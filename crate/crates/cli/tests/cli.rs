use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn grec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grec")).args(args).output().unwrap()
}

fn json(output: &Output) -> Value {
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).unwrap()
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path.to_str().unwrap().to_owned()
}

fn metric_report(dir: &Path, name: &str, values: &[f64]) -> String {
    let report =
        grec_core::MetricReport::from_group_values("grouped_recall_at_k", 1, Some(8), 0, values.to_vec(), 0.05)
            .unwrap();
    write(dir, name, &serde_json::to_string(&report).unwrap())
}

const HAND: &str = "x,label\n0,a\n1,a\n10,b\n11,b\n";

#[test]
fn eval_hand_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "hand.csv", HAND);
    let report = json(&grec(&["eval", "--data", &data]));
    assert_eq!(report["value"], 1.0);
    assert_eq!(report["metric"], "recall_at_k");
    assert_eq!(report["group_size"], Value::Null);

    let interleaved = write(dir.path(), "mixed.csv", "x,label\n0,a\n1,b\n2,a\n3,b\n");
    assert_eq!(json(&grec(&["eval", "--data", &interleaved]))["value"], 0.0);
    assert_eq!(json(&grec(&["eval", "--data", &interleaved, "--k", "3"]))["value"], 1.0);
}

#[test]
fn full_group_matches_plain_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("s.grec");
    let data = data.to_str().unwrap();
    assert!(
        grec(&["gen", "--out", data, "--classes", "20", "--std", "0.6", "--seed", "4"])
            .status
            .success()
    );
    let plain = json(&grec(&["eval", "--data", data, "--k", "2"]));
    let grouped = json(&grec(&[
        "eval",
        "--data",
        data,
        "--k",
        "2",
        "--group-size",
        "20",
        "--seed",
        "9",
    ]));
    assert_eq!(
        plain["value"].as_f64().unwrap().to_bits(),
        grouped["value"].as_f64().unwrap().to_bits()
    );
    assert_eq!(grouped["group_count"], 1);
    assert_eq!(grouped["ci"]["half_width"], Value::Null);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "hand.csv", HAND);
    for args in [
        vec!["eval", "--data", &data, "--k", "0"],
        vec!["eval", "--data", &data, "--group-size", "0"],
        vec!["eval", "--data", &data, "--alpha", "1.5"],
        vec!["eval", "--data", &data, "--backend", "annoy"],
        vec!["bench", "--sizes", "5000,5000"],
        vec!["eval"],
    ] {
        let out = grec(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(out.stdout.is_empty());
        assert!(!out.stderr.is_empty());
    }
    let out = grec(&["eval", "--data", &data, "--k", "0"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("k"));
}

#[test]
fn missing_file_is_reported_once() {
    let out = grec(&["eval", "--data", "/nonexistent/data.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.matches("/nonexistent/data.csv").count(), 1, "{stderr}");
}

#[test]
fn warnings_go_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "w.csv", "x,label\n0,a\n1,a\n5,b\n6,b\n9,c\n20,d\n21,d\n");
    let out = grec(&["eval", "--data", &data, "--group-size", "2", "--k", "9"]);
    let report = json(&out);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("warning"), "{stderr}");
    assert_eq!(report["skipped_queries"], 1);
    assert!(report["warnings"]
        .as_array()
        .unwrap()
        .iter()
        .any(|w| w.as_str().unwrap().starts_with("low group count")));
}

#[test]
fn compare_from_saved_reports() {
    let dir = tempfile::tempdir().unwrap();
    let a = metric_report(dir.path(), "a.json", &[1.0, 0.8]);
    let b = metric_report(dir.path(), "b.json", &[0.6, 0.8]);
    let out = json(&grec(&["compare", "--data-a", &a, "--data-b", &b]));
    assert!((out["difference"].as_f64().unwrap() - 0.2).abs() < 1e-12);
    assert!((out["bound"].as_f64().unwrap() - 0.27718).abs() < 1e-4);
    assert_eq!(out["consistent"], true);

    let ones = metric_report(dir.path(), "ones.json", &[1.0; 4]);
    let zeros = metric_report(dir.path(), "zeros.json", &[0.0; 4]);
    let out = json(&grec(&["compare", "--data-a", &ones, "--data-b", &zeros]));
    assert_eq!(out["difference"], 1.0);
    assert_eq!(out["bound"], 0.0);
    assert_eq!(out["consistent"], false);

    let out = json(&grec(&["compare", "--data-a", &a, "--data-b", &a]));
    assert_eq!(out["difference"], 0.0);
    assert_eq!(out["consistent"], true);

    let plain =
        grec_core::MetricReport::from_group_values("grouped_recall_at_k", 5, Some(8), 0, vec![0.5, 0.6], 0.05).unwrap();
    let other_k = write(dir.path(), "k5.json", &serde_json::to_string(&plain).unwrap());
    assert_eq!(
        grec(&["compare", "--data-a", &a, "--data-b", &other_k]).status.code(),
        Some(1)
    );
}

#[test]
fn compare_datasets_directly() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for seed in ["1", "2"] {
        let path = dir.path().join(format!("{seed}.grec"));
        let path = path.to_str().unwrap().to_owned();
        assert!(
            grec(&["gen", "--out", &path, "--classes", "64", "--std", "0.5", "--seed", seed])
                .status
                .success()
        );
        paths.push(path);
    }
    let out = json(&grec(&[
        "compare",
        "--data-a",
        &paths[0],
        "--data-b",
        &paths[1],
        "--group-size",
        "8",
    ]));
    assert_eq!(out["group_count_a"], 8);
    let bound = out["bound"].as_f64().unwrap();
    assert!(bound > 0.0);
    assert_eq!(out["consistent"], out["difference"].as_f64().unwrap().abs() <= bound);
}

#[test]
fn gap_from_saved_reports() {
    let dir = tempfile::tempdir().unwrap();
    for (train, test, expected) in [(0.685, 0.660, 0.025), (0.442, 0.480, -0.038), (0.5, 0.5, 0.0)] {
        let tr = metric_report(dir.path(), "train.json", &[train; 3]);
        let te = metric_report(dir.path(), "test.json", &[test; 3]);
        let out = json(&grec(&["gap", "--train", &tr, "--test", &te]));
        let gap = out["gap"].as_f64().unwrap();
        assert_eq!(gap.to_bits(), (train - test).to_bits());
        assert!((gap - expected).abs() < 1e-15);
    }
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let data = data.to_str().unwrap();
    assert!(grec(&["gen", "--out", data, "--classes", "48", "--std", "0.5"])
        .status
        .success());
    let args = ["eval", "--data", data, "--group-size", "8", "--seed", "11"];
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("timing");
        v
    };
    let first = strip(json(&grec(&args)));
    assert_eq!(first, strip(json(&grec(&args))));
    let other = strip(json(&grec(&[
        "eval",
        "--data",
        data,
        "--group-size",
        "8",
        "--seed",
        "12",
    ])));
    assert_ne!(first["group_values"], other["group_values"]);

    let repeated = json(&grec(&[
        "eval",
        "--data",
        data,
        "--group-size",
        "8",
        "--seed",
        "11",
        "--repeats",
        "2",
    ]));
    let repeated = repeated.as_array().unwrap();
    assert_eq!(strip(repeated[0].clone()), first);
    assert_eq!(
        strip(repeated[1].clone()),
        strip(json(&grec(&[
            "eval",
            "--data",
            data,
            "--group-size",
            "8",
            "--seed",
            "12"
        ])))
    );
}

#[test]
fn csv_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "hand.csv", HAND);
    let out = grec(&["eval", "--data", &data, "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().contains("metric"));
    assert!(lines.next().unwrap().starts_with("recall_at_k"));
}

#[test]
fn gen_with_sidecar_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("g.csv");
    let labels = dir.path().join("g.labels");
    let (data, labels) = (data.to_str().unwrap(), labels.to_str().unwrap());
    assert!(grec(&[
        "gen",
        "--out",
        data,
        "--labels",
        labels,
        "--classes",
        "5",
        "--std",
        "0.3"
    ])
    .status
    .success());
    assert_eq!(std::fs::read_to_string(labels).unwrap().lines().count(), 40);
    let report = json(&grec(&["eval", "--data", data, "--labels", labels]));
    assert!(report["value"].as_f64().unwrap() > 0.5);
}

#[test]
fn synthetic_experiments_smoke() {
    let sweep = json(&grec(&[
        "sweep",
        "--classes",
        "16,32",
        "--trials",
        "3",
        "--std",
        "0.5",
        "--group-size",
        "4",
    ]));
    assert_eq!(sweep["points"].as_array().unwrap().len(), 2);
    let coverage = json(&grec(&[
        "coverage",
        "--classes",
        "32",
        "--group-size",
        "4",
        "--trials",
        "100",
        "--std",
        "0.5",
    ]));
    assert_eq!(coverage["trials"], 100);
    let covered = coverage["coverage"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&covered));
    let bench = json(&grec(&["bench", "--sizes", "200,400", "--trials", "1"]));
    assert_eq!(bench["points"].as_array().unwrap().len(), 2);
}
