use std::path::Path;
use std::process::{Command, Output};

use uucap_core::features::{read_feature_file, StreamLabel};
use uucap_core::model::Checkpoint;
use uucap_core::text::Vocabulary;

fn uucap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uucap")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = uucap(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(uucap(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(uucap(&["synth", "--n"]).status.code(), Some(2));
    assert_eq!(uucap(&["crop", "--in", "x", "--out", "y", "--crop-axis", "diagonal"]).status.code(), Some(2));
    assert_eq!(uucap(&[]).status.code(), Some(2));
}

#[test]
fn pipeline_errors_exit_with_1_and_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = uucap(&["vocab", "--manifest", s(&dir.path().join("missing.csv")), "--out", s(&dir.path().join("v.json"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: "), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");

    let out = uucap(&["synth", "--n", "1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&["--seed", "1", "synth", "--n", "8", "--out", s(a.path())]);
    ok(&["--seed", "1", "synth", "--n", "8", "--out", s(b.path())]);
    let manifest = std::fs::read(a.path().join("manifest.csv")).unwrap();
    assert_eq!(manifest, std::fs::read(b.path().join("manifest.csv")).unwrap());
    assert_eq!(String::from_utf8(manifest).unwrap().lines().count(), 9);
    for i in 0..8 {
        let name = format!("images/synth_{i:03}.png");
        assert_eq!(std::fs::read(a.path().join(&name)).unwrap(), std::fs::read(b.path().join(&name)).unwrap());
    }
}

#[test]
fn minimal_corpus_runs_the_whole_chain() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let corpus = root.join("corpus");
    ok(&["--seed", "3", "synth", "--n", "2", "--out", s(&corpus)]);
    let manifest = corpus.join("manifest.csv");

    let cropped = root.join("cropped");
    let profiles = root.join("profiles");
    let listing = ok(&["crop", "--in", s(&corpus.join("images")), "--out", s(&cropped), "--emit-profiles", s(&profiles)]);
    assert_eq!(listing.lines().count(), 2);
    let csv = std::fs::read_to_string(profiles.join("synth_000.csv")).unwrap();
    assert!(csv.starts_with("column,mean_intensity\n"));
    assert_eq!(csv.lines().count(), 1 + uucap::synth::WIDTH as usize);
    let cropped_img = image::open(cropped.join("synth_000.png")).unwrap();
    assert_eq!((cropped_img.width(), cropped_img.height()), (224, 224));

    let vocab_path = root.join("vocab.json");
    ok(&["vocab", "--manifest", s(&manifest), "--out", s(&vocab_path)]);
    let vocab = Vocabulary::load(&vocab_path).unwrap();
    assert!(vocab.index_of("quadrant").is_some());

    let (fa, fb) = (root.join("a.ufv"), root.join("b.ufv"));
    ok(&["features", "--manifest", s(&manifest), "--images", s(&cropped), "--toy-dim", "16", "--out", s(&fa)]);
    ok(&["features", "--manifest", s(&manifest), "--images", s(&cropped), "--toy-dim", "25", "--out", s(&fb)]);
    let store = read_feature_file(&fa, StreamLabel::A).unwrap();
    assert_eq!((store.len(), store.dim()), (2, 16));

    let config = root.join("config.json");
    std::fs::write(&config, r#"{"max_epochs": 3, "proj_dim": 8, "embed_dim": 8, "hidden": 4, "head_dim": 8}"#).unwrap();
    let model = root.join("model.ucm");
    ok(&[
        "train", "--manifest", s(&manifest), "--feat-a", s(&fa), "--feat-b", s(&fb), "--config", s(&config), "--out",
        s(&model),
    ]);
    let ckpt = Checkpoint::load(&model).unwrap();
    assert_eq!(ckpt.params.config.dim_a, 16);
    let history: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("model.history.json")).unwrap()).unwrap();
    assert_eq!(history["epochs"].as_array().unwrap().len(), 3);

    let captions = ok(&["caption", "--model", s(&model), "--feat-a", s(&fa), "--feat-b", s(&fb), "--image", "synth_001.png"]);
    assert!(captions.starts_with("synth_001.png\t"));
    assert_eq!(captions.lines().count(), 1);

    let report = root.join("report.json");
    ok(&[
        "evaluate", "--model", s(&model), "--manifest", s(&manifest), "--feat-a", s(&fa), "--feat-b", s(&fb),
        "--report", s(&report),
    ]);
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep["n_pairs"], 2);
    for key in ["bleu1", "bleu2", "bleu3", "bleu4", "rouge1", "rouge2", "rouge_l"] {
        let v = rep[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    std::fs::write(&config, r#"{"learning_rate": 0.01}"#).unwrap();
    let out = uucap(&["train", "--config", s(&config)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}
