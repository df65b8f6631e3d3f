mod common;

use std::fs;
use std::process::Command as Process;

use bdhh::cli::{run_command, validate_config, validate_config_with, AblationReport, Command};
use bdhh::dataio::Dataset;
use bdhh::metrics::MetricsReport;
use bdhh::Error;
use common::{tiny_config, tiny_planted, write_dunnhumby_fixture};

#[test]
fn full_pipeline_writes_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_dunnhumby_fixture(dir.path(), &tiny_planted());
    let out = dir.path().join("run");
    let cfg = validate_config(&tiny_config(&input, &out)).unwrap();
    let hash = cfg.config_hash();

    let written = run_command(Command::Preprocess, &cfg).unwrap();
    assert_eq!(written.len(), 2);
    let ds = Dataset::load(&out.join("dataset.tsv")).unwrap();
    assert_eq!(ds.stats().users, 8);
    assert_eq!(ds.vocab.n_price_levels, 10);
    let stats: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("dataset_stats.json")).unwrap()).unwrap();
    assert_eq!(stats["config_hash"], hash.as_str());
    assert_eq!(stats["seed"], 5);

    let from_file = validate_config_with(&tiny_config(&input, &out), &[("data.dataset".into(), format!("{:?}", out.join("dataset.tsv")))]).unwrap();
    run_command(Command::Train, &from_file).unwrap();
    let log: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("train_log.json")).unwrap()).unwrap();
    assert_eq!(log["config_hash"], from_file.config_hash().as_str());
    assert_eq!(log["epochs"].as_array().unwrap().len(), 2);

    run_command(Command::Evaluate, &from_file).unwrap();
    let first = fs::read(out.join("report.json")).unwrap();
    let report = MetricsReport::from_json(std::str::from_utf8(&first).unwrap()).unwrap();
    assert_eq!(report.users, 8);
    assert_eq!(report.seed, 5);
    assert_eq!(report.dataset, "fixture");
    assert_eq!(report.checkpoint, log["checkpoint"].as_str().unwrap());
    assert!(report.metrics.iter().all(|m| (0.0..=1.0).contains(&m.ndcg) && (0.0..=1.0).contains(&m.hit)));
    run_command(Command::Evaluate, &from_file).unwrap();
    assert_eq!(fs::read(out.join("report.json")).unwrap(), first);
    assert!(out.join("baseline.tsv").exists());
    assert!(!out.join(".bdhh.lock").exists());
}

#[test]
fn ablate_writes_three_rows_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_dunnhumby_fixture(dir.path(), &tiny_planted());
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let cfg = validate_config(&tiny_config(&input, &out)).unwrap();
        run_command(Command::Ablate, &cfg).unwrap();
        let json = fs::read_to_string(out.join("ablation.json")).unwrap();
        let report: AblationReport = serde_json::from_str(&json).unwrap();
        let variants: Vec<&str> = report.rows.iter().map(|r| r.variant.as_str()).collect();
        assert_eq!(variants, ["BDHH", "w/o A", "w/o P"]);
        assert_eq!(fs::read_to_string(out.join("ablation.tsv")).unwrap().lines().count(), 4);
        outputs.push((json, fs::read(out.join("checkpoint_bdhh.bin")).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn missing_dataset_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = validate_config(&tiny_config(&dir.path().join("absent.csv"), &dir.path().join("o"))).unwrap();
    assert!(matches!(run_command(Command::Preprocess, &cfg), Err(Error::MissingFile(_))));
}

#[test]
fn binary_reports_errors_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_bdhh"))
        .args(["train", "--input"])
        .arg(dir.path().join("absent.csv"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let line = String::from_utf8(out.stderr).unwrap();
    let record: serde_json::Value = serde_json::from_str(line.lines().last().unwrap()).unwrap();
    assert_eq!(record["status"], "error");
    assert_eq!(record["kind"], "MissingFile");

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[model]\nwidth = 4\n").unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_bdhh")).arg("evaluate").arg("--config").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("\"UnknownKey\""));
}

#[test]
fn binary_honours_output_root_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_dunnhumby_fixture(dir.path(), &tiny_planted());
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, tiny_config(&input, std::path::Path::new("ignored"))).unwrap();
    let root = dir.path().join("root");
    let out = Process::new(env!("CARGO_BIN_EXE_bdhh"))
        .args(["preprocess", "--output-dir", "rel", "--seed", "9", "--config"])
        .arg(&cfg)
        .env("BDHH_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ds = Dataset::load(&root.join("rel").join("dataset.tsv")).unwrap();
    assert_eq!(ds.seed, 9);
}
