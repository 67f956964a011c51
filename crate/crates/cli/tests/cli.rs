//! The `addm` binary driven as a subprocess.

use std::path::PathBuf;
use std::process::{Command, Output};

fn addm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_addm"))
        .args(args)
        .output()
        .unwrap()
}

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(format!("{name}.csv"))
        .display()
        .to_string()
}

fn lines(out: &Output) -> Vec<serde_json::Value> {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

const SMALL: [&str; 8] = [
    "--features",
    "32",
    "--rank",
    "8",
    "--epochs",
    "2",
    "--encoder",
    "4,2",
];

#[test]
fn eval_reports_documented_keys() {
    let wine = data("wine");
    let out = addm(&[&["eval", "--data", &wine, "--gamma", "0.1"][..], &SMALL].concat());
    let report = &lines(&out)[0];
    for key in [
        "dataset",
        "method",
        "auc_roc",
        "auc_pr",
        "f1",
        "tau",
        "outlier_rate",
        "n_train",
        "n_test",
        "scores",
        "predicted",
        "config",
    ] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert!(report.get("seconds").is_none());
    assert_eq!(report["dataset"], "wine");
    assert_eq!(
        report["scores"].as_array().unwrap().len() as u64,
        report["n_test"].as_u64().unwrap()
    );

    let timed = addm(&[&["eval", "--data", &wine, "--include-timing"][..], &SMALL].concat());
    assert!(lines(&timed)[0]["seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn fitted_model_scores_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.addm");
    let model = model.to_str().unwrap();
    let wine = data("wine");
    for method in ["addm", "laddm", "kde", "ae", "laddm-norecon"] {
        let fit = addm(
            &[
                &["fit", "--data", &wine, "--method", method, "--model", model][..],
                &SMALL,
            ]
            .concat(),
        );
        assert_eq!(lines(&fit)[0]["method"], method);
        let scored = lines(&addm(&["score", "--data", &wine, "--model", model]));
        assert_eq!(scored.len(), 129);
        assert_eq!(scored[5]["row"], 5);
        assert!(scored
            .iter()
            .all(|s| s["score"].is_f64() && s["anomaly"].is_boolean()));
    }
}

#[test]
fn out_flag_writes_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let out = addm(
        &[
            &[
                "eval",
                "--data",
                &data("wine"),
                "--out",
                path.to_str().unwrap(),
            ][..],
            &SMALL,
        ]
        .concat(),
    );
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1);
}

#[test]
fn gridsearch_respects_the_budget() {
    let out = addm(
        &[
            &[
                "gridsearch",
                "--data",
                &data("wine"),
                "--gamma",
                "0.05,0.1,0.5",
                "--features",
                "16,32",
                "--budget",
                "4",
            ][..],
            &["--rank", "8", "--epochs", "1"],
        ]
        .concat(),
    );
    let records = lines(&out);
    assert_eq!(records.len(), 5);
    let best = records.last().unwrap();
    let best_trial = best["best_trial"].as_u64().unwrap();
    assert!(best_trial < 4);
    let trial = records
        .iter()
        .find(|r| r["trial"].as_u64() == Some(best_trial))
        .unwrap();
    assert_eq!(trial["auc_roc"], best["report"]["auc_roc"]);
}

#[test]
fn ablate_emits_one_report_per_method() {
    let out = addm(
        &[
            &[
                "ablate",
                "--data",
                &data("glass"),
                "--methods",
                "ae,kde,laddm",
            ][..],
            &SMALL,
        ]
        .concat(),
    );
    let methods: Vec<String> = lines(&out)
        .iter()
        .map(|r| r["method"].as_str().unwrap().to_owned())
        .collect();
    assert_eq!(methods, ["ae", "kde", "laddm"]);
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "0.1,0.2,0\n0.3,x,1\n").unwrap();
    let out = addm(&["eval", "--data", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2") && err.contains("column 2"), "{err}");

    let out = addm(&["eval", "--data", &data("wine"), "--gamma", "-1"]);
    assert!(!out.status.success());
    let out = addm(&["eval", "--data", &data("wine"), "--method", "svm"]);
    assert!(!out.status.success());
    let missing = dir.path().join("none.addm");
    let out = addm(&[
        "score",
        "--data",
        &data("wine"),
        "--model",
        missing.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}
