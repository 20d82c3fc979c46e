//! File-level pipeline stages behind the subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use uucap_core::features::{extract_toy_features, read_feature_file, write_feature_file, FeatureStore, StreamLabel};
use uucap_core::metrics::{evaluate_corpus, MetricReport};
use uucap_core::model::{
    greedy_caption, split_indices, train_with_observer, Checkpoint, EpochObserver, Example, NoObserver,
    TrainingData, TrainingHistory,
};
use uucap_core::roi_crop::{column_means, crop_roi, load_image, standardize, to_grayscale, CropAxis, CropDetection};
use uucap_core::text::{normalize_caption, read_manifest, tag_caption, ManifestRow, Vocabulary};

use crate::config::RunConfig;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Image files in `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub struct CropRecord {
    pub filename: String,
    pub detection: CropDetection,
}

/// Crops and standardizes every image of `input` into `output` under the same
/// file name, optionally writing each frame's column-mean profile as CSV.
pub fn crop_directory(
    input: &Path,
    output: &Path,
    threshold: f64,
    axis: CropAxis,
    profiles: Option<&Path>,
) -> Result<Vec<CropRecord>> {
    std::fs::create_dir_all(output)?;
    if let Some(dir) = profiles {
        std::fs::create_dir_all(dir)?;
    }
    let mut records = Vec::new();
    for path in list_images(input)? {
        let filename = path.file_name().and_then(|n| n.to_str()).context("non-UTF-8 file name")?.to_owned();
        let img = load_image(&path)?;
        let (cropped, detection) = crop_roi(&img, threshold, axis).with_context(|| filename.clone())?;
        standardize(&cropped)?
            .to_dynamic()
            .save(output.join(&filename))
            .with_context(|| format!("writing {filename}"))?;
        if let Some(dir) = profiles {
            let gray = to_grayscale(&img)?;
            let means = column_means(&gray, 0..=gray.height() - 1);
            let mut csv = String::from("column,mean_intensity\n");
            for (c, m) in means.iter().enumerate() {
                csv.push_str(&format!("{c},{m}\n"));
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(&filename);
            std::fs::write(dir.join(format!("{stem}.csv")), csv)?;
        }
        records.push(CropRecord { filename, detection });
    }
    Ok(records)
}

/// Vocabulary over every caption of a manifest.
pub fn build_vocabulary(manifest: &Path) -> Result<Vocabulary> {
    let rows = read_manifest(manifest)?;
    let tagged: Vec<String> = rows.iter().map(|r| tag_caption(&normalize_caption(&r.caption))).collect();
    Ok(Vocabulary::build(&tagged)?)
}

/// Grid-pooled features for every manifest image, in manifest order.
pub fn extract_features(manifest: &Path, images: &Path, dim: usize, label: StreamLabel) -> Result<FeatureStore> {
    let rows = read_manifest(manifest)?;
    let mut store = FeatureStore::new(label, dim)?;
    for row in rows {
        let img = load_image(&images.join(&row.filename)).with_context(|| row.filename.clone())?;
        let unit = standardize(&img)?;
        store.insert(extract_toy_features(&unit, &row.filename, dim)?)?;
    }
    Ok(store)
}

pub fn write_features(store: &FeatureStore, out: &Path) -> Result<()> {
    write_feature_file(store, out).with_context(|| format!("writing {}", out.display()))
}

/// Feature vectors of one image from both streams.
fn lookup<'a>(a: &'a FeatureStore, b: &'a FeatureStore, name: &str) -> Result<(&'a [f32], &'a [f32])> {
    let fa = a.get(name).with_context(|| format!("no stream A features for {name}"))?;
    let fb = b.get(name).with_context(|| format!("no stream B features for {name}"))?;
    Ok((&fa.values, &fb.values))
}

pub fn load_streams(feat_a: &Path, feat_b: &Path) -> Result<(FeatureStore, FeatureStore)> {
    let a = read_feature_file(feat_a, StreamLabel::A).with_context(|| feat_a.display().to_string())?;
    let b = read_feature_file(feat_b, StreamLabel::B).with_context(|| feat_b.display().to_string())?;
    Ok((a, b))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: TrainingHistory,
    pub train_rows: Vec<ManifestRow>,
    pub val_rows: Vec<ManifestRow>,
}

/// Splits the manifest, builds the vocabulary on the training part, encodes
/// captions and trains.
pub fn train_model(
    rows: &[ManifestRow],
    a: &FeatureStore,
    b: &FeatureStore,
    cfg: &RunConfig,
    observer: &mut dyn EpochObserver,
) -> Result<TrainOutcome> {
    let training = cfg.training();
    let (train_idx, val_idx) = split_indices(rows.len(), training.split_fraction, training.seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>();
    let (train_rows, val_rows) = (pick(&train_idx), pick(&val_idx));
    let tagged = |r: &ManifestRow| tag_caption(&normalize_caption(&r.caption));
    let vocab = Vocabulary::build(&train_rows.iter().map(tagged).collect::<Vec<_>>())?;
    let arch = cfg.architecture(a.dim(), b.dim(), vocab.size() + 1);
    let examples = |rows: &[ManifestRow]| -> Result<Vec<Example>> {
        rows.iter()
            .map(|r| {
                let (fa, fb) = lookup(a, b, &r.filename)?;
                Ok(Example {
                    name: r.filename.clone(),
                    feat_a: fa.to_vec(),
                    feat_b: fb.to_vec(),
                    caption: vocab.encode(&tagged(r), arch.max_len)?,
                })
            })
            .collect()
    };
    let data = TrainingData {
        train: examples(&train_rows)?,
        val: examples(&val_rows)?,
    };
    let (params, history) = train_with_observer(&data, &arch, &training, observer)?;
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            params,
            vocabulary: vocab,
            seed: training.seed,
            best_epoch: history.best_epoch,
        },
        history,
        train_rows,
        val_rows,
    })
}

/// Reads all inputs from disk, trains and writes the checkpoint and history.
pub fn train_files(
    manifest: &Path,
    feat_a: &Path,
    feat_b: &Path,
    cfg: &RunConfig,
    model_out: &Path,
    history_out: &Path,
) -> Result<TrainOutcome> {
    let rows = read_manifest(manifest)?;
    let (a, b) = load_streams(feat_a, feat_b)?;
    let outcome = train_model(&rows, &a, &b, cfg, &mut NoObserver)?;
    outcome.checkpoint.save(model_out).with_context(|| model_out.display().to_string())?;
    std::fs::write(history_out, serde_json::to_string_pretty(&outcome.history)? + "\n")?;
    Ok(outcome)
}

/// Greedy captions for the named images.
pub fn caption_images(ckpt: &Checkpoint, a: &FeatureStore, b: &FeatureStore, names: &[String]) -> Result<Vec<String>> {
    names
        .iter()
        .map(|name| {
            let (fa, fb) = lookup(a, b, name)?;
            Ok(greedy_caption(&ckpt.params, &ckpt.vocabulary, fa, fb)?.text)
        })
        .collect()
}

/// Captions every manifest image and scores the result against the manifest
/// captions.
pub fn evaluate_model(ckpt: &Checkpoint, rows: &[ManifestRow], a: &FeatureStore, b: &FeatureStore) -> Result<MetricReport> {
    if rows.is_empty() {
        bail!("evaluation manifest is empty");
    }
    let names: Vec<String> = rows.iter().map(|r| r.filename.clone()).collect();
    let captions = caption_images(ckpt, a, b, &names)?;
    let pairs: Vec<(&str, &str)> = captions.iter().map(String::as_str).zip(rows.iter().map(|r| r.caption.as_str())).collect();
    Ok(evaluate_corpus(&pairs)?)
}

/// One row of the architecture comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub architecture: String,
    pub rnn_kind: uucap_core::RnnKind,
    pub bidirectional: bool,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonRow {
    pub fn new(model: &Path, ckpt: &Checkpoint, r: &MetricReport) -> Self {
        let cfg = &ckpt.params.config;
        Self {
            model: model.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            architecture: cfg.label(),
            rnn_kind: cfg.rnn_kind,
            bidirectional: cfg.bidirectional,
            bleu1: r.bleu1,
            bleu2: r.bleu2,
            bleu3: r.bleu3,
            bleu4: r.bleu4,
            rouge1: r.rouge1,
            rouge2: r.rouge2,
            rouge_l: r.rouge_l,
        }
    }
}

impl ComparisonTable {
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<24} {:<8} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}\n",
            "model", "arch", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "ROUGE-1", "ROUGE-2", "ROUGE-L"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<24} {:<8} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4}\n",
                r.model, r.architecture, r.bleu1, r.bleu2, r.bleu3, r.bleu4, r.rouge1, r.rouge2, r.rouge_l
            ));
        }
        out
    }
}
