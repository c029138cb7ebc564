use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use iris::data::load_dataset;
use iris::pipeline::{ModelVariant, Prediction};

fn iris(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iris"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, n: usize) -> PathBuf {
    let data = dir.join("data");
    let out = iris(&[
        "generate",
        "--n",
        &n.to_string(),
        "--seed",
        "7",
        "--dim",
        "8",
        "--out",
        s(&data),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    data
}

fn train(data: &Path, model: &Path, variant: &str, epochs: usize) -> Output {
    iris(&[
        "train",
        "--data",
        s(data),
        "--variant",
        variant,
        "--out",
        s(model),
        "--epochs",
        &epochs.to_string(),
    ])
}

fn sorted_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn generate_writes_triples_and_manifest_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate(dir.path(), 5);
    let files = sorted_files(&a);
    assert_eq!(files.len(), 5 * 3 + 1);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["ids"].as_array().unwrap().len(), 5);
    let b = dir.path().join("again");
    let out = iris(&[
        "generate",
        "--n",
        "5",
        "--seed",
        "7",
        "--dim",
        "8",
        "--out",
        s(&b),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(sorted_files(&b), files);
}

#[test]
fn unwritable_output_fails_without_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "not a directory").unwrap();
    let target = blocker.join("data");
    let out = iris(&["generate", "--n", "3", "--out", s(&target)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("blocker"));
    assert!(!target.join("manifest.json").exists());
}

#[test]
fn missing_dataset_is_a_validation_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let out = train(&missing, &dir.path().join("m.iris"), "full", 1);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("nowhere"));
}

#[test]
fn record_without_embeddings_names_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 3);
    let victim = fs::read_dir(&data)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().ends_with(".emb.f64"))
        .unwrap();
    let id = victim
        .file_name()
        .unwrap()
        .to_string_lossy()
        .trim_end_matches(".emb.f64")
        .to_string();
    fs::remove_file(&victim).unwrap();
    let out = train(&data, &dir.path().join("m.iris"), "full", 1);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains(&id), "{}", stderr(&out));
}

#[test]
fn train_writes_model_and_flushed_log() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 6);
    let model = dir.path().join("base.iris");
    let out = train(&data, &model, "score-only", 3);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(&fs::read(&model).unwrap()[..4], b"IRIS");
    let log = fs::read_to_string(dir.path().join("base.log.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "epoch,segmentation,element,sequence,total");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("1,"));
}

#[test]
fn training_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 6);
    let (a, b) = (dir.path().join("a.iris"), dir.path().join("b.iris"));
    assert_eq!(code(&train(&data, &a, "full", 2)), 0);
    assert_eq!(code(&train(&data, &b, "full", 2)), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(dir.path().join("a.log.csv")).unwrap(),
        fs::read(dir.path().join("b.log.csv")).unwrap()
    );
}

#[test]
fn divergence_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 4);
    let out = iris(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&dir.path().join("m.iris")),
        "--epochs",
        "3",
        "--learning-rate",
        "1e300",
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(!dir.path().join("m.iris").exists());
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 4);
    let config = dir.path().join("run.json");
    let model = dir.path().join("cfg.iris");
    let doc = serde_json::json!({
        "data": data, "out": model, "variant": "tes-pcs",
        "train": { "max_epochs": 4, "seed": 3 }
    });
    fs::write(&config, doc.to_string()).unwrap();
    let out = iris(&["train", "--config", s(&config), "--epochs", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let log = fs::read_to_string(dir.path().join("cfg.log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"unknown_field": 1}"#).unwrap();
    assert_eq!(code(&iris(&["train", "--config", s(&bad)])), 1);
}

#[test]
fn predict_report_and_evaluate_a_full_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 6);
    let model = dir.path().join("full.iris");
    assert_eq!(code(&train(&data, &model, "full", 2)), 0);

    let preds = dir.path().join("preds.json");
    let out = iris(&[
        "predict",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--out",
        s(&preds),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let predictions: Vec<Prediction> = serde_json::from_slice(&fs::read(&preds).unwrap()).unwrap();
    assert_eq!(predictions.len(), 6);
    assert!(predictions.iter().all(|p| p.judgment.is_some()));

    let id = predictions[0].id.clone();
    let text = iris(&[
        "report",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--id",
        &id,
    ]);
    assert_eq!(code(&text), 0, "{}", stderr(&text));
    let text = stdout(&text);
    assert!(
        text.contains("Total Score:")
            && text.contains("TES subtotal:")
            && text.contains("PCS subtotal:")
    );
    let records = load_dataset(&data).unwrap();
    let record = records.iter().find(|r| r.id() == id).unwrap();
    let timeline = text
        .lines()
        .skip_while(|l| !l.starts_with("Timeline"))
        .nth(1)
        .unwrap();
    assert_eq!(timeline.len(), record.embeddings.valid_count());

    let html = dir.path().join("r.html");
    let out = iris(&[
        "report",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--id",
        &id,
        "--format",
        "html",
        "--out",
        s(&html),
    ]);
    assert_eq!(code(&out), 0);
    assert!(fs::read_to_string(&html)
        .unwrap()
        .starts_with("<!DOCTYPE html>"));

    let csv = dir.path().join("metrics.csv");
    let out = iris(&[
        "evaluate",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--out",
        s(&csv),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("Spearman") && stdout(&out).contains("Dice"));
    let csv = fs::read_to_string(&csv).unwrap();
    assert!(csv.starts_with("metric,subset,value\n"));
    assert!(csv.contains("\ndice,mean,") && csv.contains("\niou,mean,"));
    assert_eq!(
        csv.lines()
            .filter(|l| l.starts_with("tertile_count,"))
            .count(),
        3
    );

    let out = iris(&[
        "evaluate",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--variant",
        "score-only",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("does not match"));
}

#[test]
fn report_needs_a_judgment_variant() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 4);
    let model = dir.path().join("s.iris");
    assert_eq!(code(&train(&data, &model, "score-only", 1)), 0);
    let id = load_dataset(&data).unwrap()[0].id().to_string();
    let out = iris(&[
        "report",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--id",
        &id,
    ]);
    assert_eq!(code(&out), 1);
}

fn oracle_predictions(data: &Path) -> Vec<Prediction> {
    load_dataset(data)
        .unwrap()
        .iter()
        .map(|r| {
            let truth = r.sheet.truth.as_ref().unwrap();
            let (tes, pcs) = (
                r.sheet.composed_tes(&truth.goe),
                r.sheet.composed_pcs(&truth.pcs),
            );
            Prediction {
                id: r.id().to_string(),
                variant: ModelVariant::Full,
                tes: Some(tes),
                pcs: Some(pcs),
                total: tes + pcs,
                segments: Some(r.truth_labels.as_ref().unwrap().segments()),
                judgment: None,
                warnings: Vec::new(),
            }
        })
        .collect()
}

#[test]
fn perfect_predictions_correlate_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 8);
    let preds = dir.path().join("oracle.json");
    fs::write(
        &preds,
        serde_json::to_string(&oracle_predictions(&data)).unwrap(),
    )
    .unwrap();
    let csv = dir.path().join("m.csv");
    let out = iris(&[
        "evaluate",
        "--predictions",
        s(&preds),
        "--data",
        s(&data),
        "--out",
        s(&csv),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(&csv).unwrap();
    for line in csv
        .lines()
        .filter(|l| l.starts_with("spearman,") || l.starts_with("pearson,"))
    {
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{line}");
    }
    for metric in ["dice,mean,", "iou,mean,"] {
        let line = csv.lines().find(|l| l.starts_with(metric)).unwrap();
        assert_eq!(
            line.rsplit(',').next().unwrap().parse::<f64>().unwrap(),
            1.0
        );
    }
}

#[test]
fn two_record_test_set_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 2);
    let preds = dir.path().join("oracle.json");
    fs::write(
        &preds,
        serde_json::to_string(&oracle_predictions(&data)).unwrap(),
    )
    .unwrap();
    let out = iris(&["evaluate", "--predictions", s(&preds), "--data", s(&data)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("at least 3"));
}

#[test]
fn split_flags_select_the_held_out_records() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 7);
    let model = dir.path().join("m.iris");
    let out = iris(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&model),
        "--epochs",
        "1",
        "--train-count",
        "4",
        "--split-seed",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let preds = dir.path().join("p.json");
    let out = iris(&[
        "predict",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--out",
        s(&preds),
        "--train-count",
        "4",
        "--split-seed",
        "1",
    ]);
    assert_eq!(code(&out), 0);
    let predictions: Vec<Prediction> = serde_json::from_slice(&fs::read(&preds).unwrap()).unwrap();
    assert_eq!(predictions.len(), 3);
    let out = iris(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&model),
        "--train-count",
        "7",
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn bad_arguments_are_validation_errors() {
    assert_eq!(
        code(&iris(&["train", "--variant", "bogus", "--data", "."])),
        1
    );
    assert_eq!(code(&iris(&["frobnicate"])), 1);
    assert_eq!(code(&iris(&["--help"])), 0);
}
