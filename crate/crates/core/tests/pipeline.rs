mod common;

use std::process::Command;
use std::sync::OnceLock;

use common::*;
use ids_core::features::SplitPart;
use ids_core::ingest::load_csv;
use ids_core::pipeline::*;
use ids_core::synth::{synth_flows, FlowSynthOptions};
use ids_core::train::{load_checkpoint, WEIGHTS_FILE};
use ids_core::Error;

fn fixture() -> &'static Trained {
    static F: OnceLock<Trained> = OnceLock::new();
    F.get_or_init(|| train_fixture(1500, 21))
}

#[test]
fn preprocess_writes_artifacts_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let flows = write_flows(dir.path(), "flows.csv", 600, 2, true);
    let cfg = quick_run_config(9);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let summary = cmd_preprocess(std::slice::from_ref(&flows), &a, &cfg).unwrap();
    cmd_preprocess(&[dir.path().to_path_buf()], &b, &cfg).unwrap();
    for f in [PREPROCESS_FILE, SPLIT_FILE, FEATURES_FILE, LABELS_FILE, RUN_CONFIG_FILE] {
        assert!(a.join(f).is_file(), "{f}");
    }
    assert_eq!(std::fs::read(a.join(SPLIT_FILE)).unwrap(), std::fs::read(b.join(SPLIT_FILE)).unwrap());
    assert_eq!(
        std::fs::read(a.join(FEATURES_FILE)).unwrap(),
        std::fs::read(b.join(FEATURES_FILE)).unwrap()
    );
    assert!(summary.clean_report.dropped() > 0);
    assert_eq!(summary.train_rows + summary.val_rows + summary.test_rows, summary.rows);
    let art = load_artifacts(&a).unwrap();
    assert_eq!(art.matrix.data.cols, summary.features);
    assert!(art.matrix.data.data.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn subsample_caps_rows() {
    let dir = tempfile::tempdir().unwrap();
    let flows = write_flows(dir.path(), "flows.csv", 800, 3, false);
    let cfg = RunConfig {
        subsample: Some(300),
        ..quick_run_config(1)
    };
    let s = cmd_preprocess(&[flows], &dir.path().join("out"), &cfg).unwrap();
    assert_eq!(s.rows, 300);
}

#[test]
fn missing_label_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let flows = write_flows(dir.path(), "flows.csv", 100, 2, false);
    let cfg = RunConfig {
        label_column: "Verdict".into(),
        ..quick_run_config(1)
    };
    let err = cmd_preprocess(std::slice::from_ref(&flows), &dir.path().join("out"), &cfg).unwrap_err();
    assert!(err.to_string().contains("Verdict"), "{err}");

    let out = Command::new(env!("CARGO_BIN_EXE_ids"))
        .args(["preprocess", "--label-column", "Verdict", "--out"])
        .arg(dir.path().join("cli"))
        .arg(&flows)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Verdict"));
}

#[test]
fn train_writes_checkpoint_and_history() {
    let t = fixture();
    let ckpt = load_checkpoint(&t.checkpoint).unwrap();
    let history = std::fs::read_to_string(t.checkpoint.join(HISTORY_FILE)).unwrap();
    let mut lines = history.lines();
    assert_eq!(lines.next(), Some("epoch,train_loss,train_acc,val_loss,val_acc"));
    assert_eq!(lines.count(), ckpt.history.epochs.len());
    assert!(ckpt.history.epochs.len() <= 3);
    assert!(t.checkpoint.join(RUN_CONFIG_FILE).is_file());
    assert!(t.checkpoint.join(PREPROCESS_FILE).is_file());
}

#[test]
fn grid_flag_writes_grid_csv() {
    let t = fixture();
    let out = t.dir.path().join("grid");
    let cfg = RunConfig {
        grid: true,
        grid_learning_rates: vec![1e-2, 1e-3],
        grid_batch_sizes: vec![64],
        max_epochs: 1,
        ..quick_run_config(21)
    };
    let s = cmd_train(&t.artifacts, &out, &cfg).unwrap();
    let grid = std::fs::read_to_string(out.join(GRID_FILE)).unwrap();
    assert_eq!(grid.lines().count(), 3);
    assert!(cfg.grid_learning_rates.contains(&s.learning_rate));
    // The checkpoint written for the winning cell reloads and scores.
    Detector::load(&out).unwrap();
}

#[test]
fn train_failure_leaves_diagnostics() {
    let t = fixture();
    let broken = t.dir.path().join("broken-artifacts");
    std::fs::create_dir_all(&broken).unwrap();
    for f in [PREPROCESS_FILE, SPLIT_FILE, LABELS_FILE] {
        std::fs::copy(t.artifacts.join(f), broken.join(f)).unwrap();
    }
    std::fs::write(broken.join(FEATURES_FILE), [0u8; 16]).unwrap();
    let out = t.dir.path().join("failed-train");
    let err = cmd_train(&broken, &out, &quick_run_config(21)).unwrap_err();
    assert!(matches!(err, Error::Digest { .. }), "{err}");
    let diag = std::fs::read_to_string(out.join(DIAGNOSTICS_FILE)).unwrap();
    assert!(diag.contains("digest"));
}

#[test]
fn evaluate_labels_each_split() {
    let t = fixture();
    let out = t.dir.path().join("eval");
    let cfg = quick_run_config(21);
    let test = cmd_evaluate(&t.checkpoint, &t.artifacts, SplitPart::Test, &out, &cfg).unwrap();
    let val = cmd_evaluate(&t.checkpoint, &t.artifacts, SplitPart::Val, &out, &cfg).unwrap();
    assert_eq!(test.split, "test");
    assert_eq!(val.split, "val");
    for r in [&test, &val] {
        let scalars = [r.accuracy, r.precision, r.recall, r.f1, r.false_alarm_rate, r.auc, r.average_precision];
        assert!(scalars.iter().all(Option::is_some), "{r:?}");
    }
    for f in ["report_test.json", "report_val.json", "roc_test.csv", "pr_val.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let roc = std::fs::read_to_string(out.join("roc_test.csv")).unwrap();
    assert!(roc.starts_with("threshold,x,y\ninf,0,0\n"));
    assert!(roc.trim_end().ends_with(",1,1"));
}

#[test]
fn tampered_inputs_are_refused() {
    let t = fixture();
    let ckpt = t.dir.path().join("tampered-ckpt");
    std::fs::create_dir_all(&ckpt).unwrap();
    for e in std::fs::read_dir(&t.checkpoint).unwrap() {
        let e = e.unwrap();
        std::fs::copy(e.path(), ckpt.join(e.file_name())).unwrap();
    }
    let w = ckpt.join(WEIGHTS_FILE);
    let mut bytes = std::fs::read(&w).unwrap();
    bytes[40] ^= 1;
    std::fs::write(&w, bytes).unwrap();
    let out = t.dir.path().join("tampered-eval");
    let err = cmd_evaluate(&ckpt, &t.artifacts, SplitPart::Test, &out, &quick_run_config(21)).unwrap_err();
    assert!(matches!(err, Error::Digest { .. }), "{err}");

    let status = Command::new(env!("CARGO_BIN_EXE_ids"))
        .args(["evaluate", "--checkpoint"])
        .arg(&ckpt)
        .arg("--artifacts")
        .arg(&t.artifacts)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(String::from_utf8_lossy(&status.stderr).contains("digest"));

    // An artifact directory from a different preprocessing run.
    let other = t.dir.path().join("other-artifacts");
    let cfg = quick_run_config(22);
    cmd_preprocess(std::slice::from_ref(&t.flows), &other, &cfg).unwrap();
    let err = cmd_evaluate(&t.checkpoint, &other, SplitPart::Test, &out, &cfg).unwrap_err();
    assert!(matches!(err, Error::Digest { .. }), "{err}");
}

#[test]
fn predict_rows_labels_and_unseen_categories() {
    let t = fixture();
    let mut table = synth_flows(&FlowSynthOptions {
        rows: 200,
        seed: 77,
        dirty_fraction: 0.0,
        duplicate_fraction: 0.0,
        ..Default::default()
    });
    for row in table.rows.iter_mut().take(5) {
        row[5] = "99".into();
    }
    let input = t.dir.path().join("unseen.csv");
    table.write_csv(&input).unwrap();
    let out = t.dir.path().join("predict");
    let cfg = quick_run_config(21);
    let s = cmd_predict(&t.checkpoint, &[input], &out, &cfg).unwrap();
    assert_eq!(s.rows, 200);
    assert_eq!(s.unseen_categories, 5);
    let text = std::fs::read_to_string(out.join(PREDICTIONS_FILE)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("row,probability,label"));
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0], i.to_string());
        let p: f64 = cells[1].parse().unwrap();
        assert_eq!(p, s.probabilities[i]);
        assert_eq!(cells[2], if p >= 0.5 { "malicious" } else { "benign" });
    }
}

#[test]
fn predict_lists_missing_columns() {
    let t = fixture();
    let table = load_csv(&[&t.flows]).unwrap();
    let keep: Vec<usize> = (0..table.columns.len())
        .filter(|&j| table.columns[j] != "Flow Duration" && table.columns[j] != "Protocol")
        .collect();
    let reduced = ids_core::ingest::FlowTable::new(
        keep.iter().map(|&j| table.columns[j].clone()).collect(),
        table.rows.iter().map(|r| keep.iter().map(|&j| r[j].clone()).collect()).collect(),
    )
    .unwrap();
    let input = t.dir.path().join("reduced.csv");
    reduced.write_csv(&input).unwrap();
    let err = cmd_predict(&t.checkpoint, &[input], &t.dir.path().join("p2"), &quick_run_config(21)).unwrap_err();
    match err {
        Error::MissingColumns(cols) => {
            assert!(cols.contains(&"Flow Duration".to_string()));
            assert!(cols.contains(&"Protocol".to_string()));
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn config_file_and_flags_reach_the_cli() {
    let t = fixture();
    let dir = t.dir.path().join("cli-config");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg_path = dir.join("run.json");
    std::fs::write(&cfg_path, r#"{"lstm_units": 5, "max_epochs": 1, "conv_blocks": [{"filters": 4, "kernel_size": 3}]}"#)
        .unwrap();
    let out = dir.join("ckpt");
    let status = Command::new(env!("CARGO_BIN_EXE_ids"))
        .args(["train", "--artifacts"])
        .arg(&t.artifacts)
        .arg("--config")
        .arg(&cfg_path)
        .args(["--dense-units", "3", "--seed", "4", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success());
    let ckpt = load_checkpoint(&out).unwrap();
    assert_eq!(ckpt.model_config.lstm_units, 5);
    assert_eq!(ckpt.model_config.dense_units, 3);
    assert_eq!(ckpt.history.epochs.len(), 1);
    let echo = std::fs::read_to_string(out.join(RUN_CONFIG_FILE)).unwrap();
    assert!(echo.contains("\"dense_units\": 3"));
}
