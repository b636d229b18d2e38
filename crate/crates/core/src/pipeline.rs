//! The `preprocess` / `train` / `evaluate` / `predict` commands as library
//! functions, plus the resolved run configuration they share.
//!
//! Artifact layout written by [`cmd_preprocess`] into its output directory:
//!
//! | file | content |
//! |------|---------|
//! | `preprocess.json` | fitted [`Preprocessor`], clean report, seeds, matrix shape and digests |
//! | `split.json` | train / val / test row indices |
//! | `features.bin` | scaled feature matrix, row-major little-endian `f64` |
//! | `labels.bin` | one byte (0 or 1) per row |
//! | `run_config.json` | the resolved configuration and inputs |
//!
//! [`cmd_train`] writes a checkpoint directory (see [`crate::train::checkpoint`])
//! that also carries a copy of `preprocess.json`, so a checkpoint alone is
//! enough for [`cmd_predict`] and the server.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::features::{stratified_subsample, DatasetSplit, FeatureMatrix, Matrix, Preprocessor, SplitPart};
use crate::ingest::{binarize_labels, clean, load_csv, CleanReport, FlowTable, LabelVector};
use crate::metrics::{cicids2017_cnn_lstm_reference, evaluate_scores, export_curves, MetricsReport};
use crate::nn::{predict_proba, ConvBlock, ModelConfig, Parameters, Tensor};
use crate::seeds::SeedSet;
use crate::train::{
    grid_search, load_checkpoint, save_checkpoint, sha256_hex, train, Checkpoint, Grid, TrainConfig, TrainingSet,
};

pub const PREPROCESS_FILE: &str = "preprocess.json";
pub const SPLIT_FILE: &str = "split.json";
pub const FEATURES_FILE: &str = "features.bin";
pub const LABELS_FILE: &str = "labels.bin";
pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const GRID_FILE: &str = "grid.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

/// Every tunable of a run. Resolution order is defaults, then the JSON
/// config file, then command-line flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub label_column: String,
    /// Stratified row cap applied after cleaning.
    pub subsample: Option<usize>,
    pub conv_blocks: Vec<ConvBlock>,
    pub pool_size: usize,
    pub lstm_units: usize,
    pub dropout_rate: f64,
    pub dense_units: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    /// Run the learning-rate × batch-size grid instead of a single fit.
    pub grid: bool,
    pub grid_learning_rates: Vec<f64>,
    pub grid_batch_sizes: Vec<usize>,
    pub threshold: f64,
    /// Add notes comparing evaluation metrics with the reference CICIDS2017
    /// figures.
    pub compare_reference: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::default_for(0);
        let tc = TrainConfig::default();
        let grid = Grid::default();
        RunConfig {
            seed: 0,
            label_column: "Label".into(),
            subsample: None,
            conv_blocks: model.conv_blocks,
            pool_size: model.pool_size,
            lstm_units: model.lstm_units,
            dropout_rate: model.dropout_rate,
            dense_units: model.dense_units,
            learning_rate: tc.learning_rate,
            batch_size: tc.batch_size,
            max_epochs: tc.max_epochs,
            patience: tc.patience,
            min_delta: tc.min_delta,
            grid: false,
            grid_learning_rates: grid.learning_rates,
            grid_batch_sizes: grid.batch_sizes,
            threshold: 0.5,
            compare_reference: false,
        }
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl RunConfig {
    /// Overlays the JSON object in `file` and then `overrides` (config keys
    /// in snake_case) onto the defaults. Unknown keys are rejected.
    pub fn resolve(file: Option<&Path>, overrides: &Map<String, Value>) -> Result<RunConfig> {
        let mut merged = match serde_json::to_value(RunConfig::default())? {
            Value::Object(m) => m,
            _ => unreachable!("RunConfig serializes to an object"),
        };
        if let Some(path) = file {
            match read_json(path)? {
                Value::Object(m) => merged.extend(m),
                _ => return Err(Error::Config(format!("{}: expected a JSON object", path.display()))),
            }
        }
        merged.extend(overrides.clone());
        let cfg: RunConfig =
            serde_json::from_value(Value::Object(merged)).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        self.train_config().validate()
    }

    pub fn seeds(&self) -> SeedSet {
        SeedSet::from_master(self.seed)
    }

    pub fn model_config(&self, input_features: usize) -> ModelConfig {
        ModelConfig {
            input_features,
            conv_blocks: self.conv_blocks.clone(),
            pool_size: self.pool_size,
            lstm_units: self.lstm_units,
            dropout_rate: self.dropout_rate,
            dense_units: self.dense_units,
            seed: self.seeds().init,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            min_delta: self.min_delta,
            seed: self.seed,
            grid: self.grid.then(|| Grid {
                learning_rates: self.grid_learning_rates.clone(),
                batch_sizes: self.grid_batch_sizes.clone(),
            }),
        }
    }

    fn echo(&self, dir: &Path, command: &str, inputs: &[PathBuf]) -> Result<()> {
        #[derive(Serialize)]
        struct Echo<'a> {
            command: &'a str,
            inputs: Vec<String>,
            config: &'a RunConfig,
        }
        write_json(
            &dir.join(RUN_CONFIG_FILE),
            &Echo {
                command,
                inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
                config: self,
            },
        )
    }
}

/// Expands directories into their `*.csv` files (sorted by name).
pub fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(Error::Empty("no input CSV files".into()));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessArtifact {
    pub format_version: u32,
    pub preprocessor: Preprocessor,
    pub clean_report: CleanReport,
    pub seeds: SeedSet,
    pub subsample: Option<usize>,
    pub rows: usize,
    pub features: usize,
    pub positives: usize,
    pub features_sha256: String,
    pub labels_sha256: String,
    pub split_sha256: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessSummary {
    pub clean_report: CleanReport,
    pub rows: usize,
    pub features: usize,
    pub train_rows: usize,
    pub val_rows: usize,
    pub test_rows: usize,
}

fn encode_f64(m: &Matrix) -> Vec<u8> {
    m.data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn cmd_preprocess(inputs: &[PathBuf], out: &Path, cfg: &RunConfig) -> Result<PreprocessSummary> {
    let files = expand_inputs(inputs)?;
    let raw = load_csv(&files)?;
    let (mut cleaned, clean_report) = clean(&raw)?;
    let seeds = cfg.seeds();
    if let Some(cap) = cfg.subsample {
        let labels = binarize_labels(&cleaned, &cfg.label_column)?;
        let keep = stratified_subsample(&labels, cap, seeds.split);
        cleaned = cleaned.select_rows(&keep);
    }
    let prepared = Preprocessor::fit(&cleaned, &cfg.label_column, seeds.split)?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let features = encode_f64(&prepared.matrix.data);
    let labels = prepared.matrix.labels.values.clone();
    let split_text = serde_json::to_string_pretty(&prepared.split)? + "\n";
    for (name, bytes) in [
        (FEATURES_FILE, features.as_slice()),
        (LABELS_FILE, labels.as_slice()),
        (SPLIT_FILE, split_text.as_bytes()),
    ] {
        let p = out.join(name);
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    }
    let artifact = PreprocessArtifact {
        format_version: 1,
        preprocessor: prepared.preprocessor.clone(),
        clean_report,
        seeds,
        subsample: cfg.subsample,
        rows: prepared.matrix.data.rows,
        features: prepared.matrix.data.cols,
        positives: prepared.matrix.labels.positives(),
        features_sha256: sha256_hex(&features),
        labels_sha256: sha256_hex(&labels),
        split_sha256: sha256_hex(split_text.as_bytes()),
    };
    write_json(&out.join(PREPROCESS_FILE), &artifact)?;
    cfg.echo(out, "preprocess", &files)?;

    Ok(PreprocessSummary {
        clean_report,
        rows: artifact.rows,
        features: artifact.features,
        train_rows: prepared.split.train_idx.len(),
        val_rows: prepared.split.val_idx.len(),
        test_rows: prepared.split.test_idx.len(),
    })
}

/// Preprocessing artifacts read back from a `preprocess` output directory.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub artifact: PreprocessArtifact,
    /// SHA-256 of the `preprocess.json` bytes.
    pub digest: String,
    pub matrix: FeatureMatrix,
    pub split: DatasetSplit,
}

fn read_checked(path: &Path, expected: &str) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let actual = sha256_hex(&bytes);
    if actual != expected {
        return Err(Error::Digest {
            what: path.display().to_string(),
            expected: expected.to_string(),
            actual,
        });
    }
    Ok(bytes)
}

pub fn load_artifacts(dir: &Path) -> Result<Artifacts> {
    let ppath = dir.join(PREPROCESS_FILE);
    let pbytes = std::fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
    let artifact: PreprocessArtifact = serde_json::from_slice(&pbytes)?;
    let features = read_checked(&dir.join(FEATURES_FILE), &artifact.features_sha256)?;
    let labels = read_checked(&dir.join(LABELS_FILE), &artifact.labels_sha256)?;
    let split_bytes = read_checked(&dir.join(SPLIT_FILE), &artifact.split_sha256)?;
    if features.len() != artifact.rows * artifact.features * 8 || labels.len() != artifact.rows {
        return Err(Error::Invalid(format!(
            "{}: matrix files do not match {} rows × {} features",
            dir.display(),
            artifact.rows,
            artifact.features
        )));
    }
    let data = Matrix {
        rows: artifact.rows,
        cols: artifact.features,
        data: features
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    let matrix = FeatureMatrix {
        data,
        feature_names: artifact.preprocessor.feature_names.clone(),
        labels: LabelVector::from_values(labels),
    };
    Ok(Artifacts {
        split: serde_json::from_slice(&split_bytes)?,
        digest: sha256_hex(&pbytes),
        artifact,
        matrix,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub weights_sha256: String,
    pub learning_rate: f64,
    pub batch_size: usize,
}

/// Trains on the artifacts in `artifacts` and writes a checkpoint to `out`.
/// A failed run leaves `diagnostics.json` in `out` before returning the error.
pub fn cmd_train(artifacts: &Path, out: &Path, cfg: &RunConfig) -> Result<TrainSummary> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let result = train_inner(artifacts, out, cfg);
    if let Err(e) = &result {
        let diag = serde_json::json!({
            "command": "train",
            "error": e.to_string(),
            "artifacts": artifacts.display().to_string(),
            "config": cfg,
        });
        write_json(&out.join(DIAGNOSTICS_FILE), &diag)?;
    }
    result
}

fn train_inner(artifacts: &Path, out: &Path, cfg: &RunConfig) -> Result<TrainSummary> {
    let art = load_artifacts(artifacts)?;
    let data = TrainingSet::from_split(&art.matrix, &art.split);
    let model_config = cfg.model_config(art.matrix.data.cols);
    let base = cfg.train_config();
    let (train_config, outcome) = match &base.grid {
        Some(grid) => {
            let base = TrainConfig {
                seed: cfg.seeds().grid,
                ..base.clone()
            };
            let res = grid_search(&model_config, &base, grid, &data)?;
            let gpath = out.join(GRID_FILE);
            std::fs::write(&gpath, res.to_csv()).map_err(|e| Error::io(&gpath, e))?;
            (res.best_config, res.best)
        }
        None => {
            let outcome = train(&model_config, &base, &data)?;
            (base, outcome)
        }
    };
    // Grid cells initialise from their own seed.
    let model_config = if cfg.grid {
        ModelConfig {
            seed: crate::seeds::derive(train_config.seed, "init"),
            ..model_config
        }
    } else {
        model_config
    };
    let ckpt = Checkpoint {
        model_config,
        params: outcome.params,
        train_config: train_config.clone(),
        history: outcome.history.clone(),
        preprocessing_digest: Some(art.digest.clone()),
    };
    save_checkpoint(&ckpt, out)?;
    let copy = out.join(PREPROCESS_FILE);
    std::fs::copy(artifacts.join(PREPROCESS_FILE), &copy).map_err(|e| Error::io(&copy, e))?;
    let hpath = out.join(HISTORY_FILE);
    std::fs::write(&hpath, outcome.history.to_csv()).map_err(|e| Error::io(&hpath, e))?;
    cfg.echo(out, "train", &[artifacts.to_path_buf()])?;

    let best = outcome.history.best().copied();
    Ok(TrainSummary {
        epochs: outcome.history.epochs.len(),
        best_epoch: outcome.history.best_epoch,
        best_val_loss: best.map_or(f64::NAN, |b| b.val_loss),
        stopped_early: outcome.history.stopped_early,
        weights_sha256: ckpt.weights_digest(),
        learning_rate: train_config.learning_rate,
        batch_size: train_config.batch_size,
    })
}

/// A loaded checkpoint together with the preprocessing it was trained with.
#[derive(Clone, Debug)]
pub struct Detector {
    pub model_config: ModelConfig,
    pub params: Parameters<f32>,
    pub preprocessor: Preprocessor,
    /// SHA-256 of the checkpoint's weight file.
    pub model_digest: String,
}

impl Detector {
    /// Loads a checkpoint directory and its bundled `preprocess.json`,
    /// checking the latter against the digest recorded at training time.
    pub fn load(checkpoint: &Path) -> Result<Detector> {
        let ckpt = load_checkpoint(checkpoint)?;
        let ppath = checkpoint.join(PREPROCESS_FILE);
        let bytes = std::fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
        verify_preprocessing(&ckpt, &ppath, &sha256_hex(&bytes))?;
        let artifact: PreprocessArtifact = serde_json::from_slice(&bytes)?;
        if artifact.preprocessor.n_features() != ckpt.model_config.input_features {
            return Err(Error::Config(format!(
                "preprocessing yields {} features, model expects {}",
                artifact.preprocessor.n_features(),
                ckpt.model_config.input_features
            )));
        }
        Ok(Detector {
            model_digest: ckpt.weights_digest(),
            model_config: ckpt.model_config,
            params: ckpt.params,
            preprocessor: artifact.preprocessor,
        })
    }

    pub fn n_features(&self) -> usize {
        self.model_config.input_features
    }

    /// Attack probabilities for preprocessed rows (row-major, `n_features`
    /// wide). Rows are scored independently, so the result for a row does not
    /// depend on what else is in the batch.
    pub fn score(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let f = self.n_features();
        if !rows.len().is_multiple_of(f) {
            return Err(Error::shape("input", format!("{} values is not a multiple of {f}", rows.len())));
        }
        let x: Vec<f32> = rows.iter().map(|&v| v as f32).collect();
        let batch = Tensor::from_vec(&[rows.len() / f, f], x)?;
        Ok(predict_proba(&self.model_config, &self.params, &batch)?
            .into_iter()
            .map(f64::from)
            .collect())
    }
}

fn verify_preprocessing(ckpt: &Checkpoint, what: &Path, actual: &str) -> Result<()> {
    match &ckpt.preprocessing_digest {
        Some(expected) if expected != actual => Err(Error::Digest {
            what: what.display().to_string(),
            expected: expected.clone(),
            actual: actual.to_string(),
        }),
        _ => Ok(()),
    }
}

pub fn label_for(probability: f64, threshold: f64) -> &'static str {
    if probability >= threshold {
        "malicious"
    } else {
        "benign"
    }
}

/// Scores one split and writes `report_<split>.json`, `roc_<split>.csv` and
/// `pr_<split>.csv` to `out`.
pub fn cmd_evaluate(
    checkpoint: &Path,
    artifacts: &Path,
    split: SplitPart,
    out: &Path,
    cfg: &RunConfig,
) -> Result<MetricsReport> {
    let ckpt = load_checkpoint(checkpoint)?;
    let art = load_artifacts(artifacts)?;
    verify_preprocessing(&ckpt, &artifacts.join(PREPROCESS_FILE), &art.digest)?;
    if ckpt.model_config.input_features != art.matrix.data.cols {
        return Err(Error::Config(format!(
            "checkpoint expects {} features, artifacts have {}",
            ckpt.model_config.input_features, art.matrix.data.cols
        )));
    }
    let part = art.matrix.select(art.split.part(split));
    let detector = Detector {
        model_digest: ckpt.weights_digest(),
        model_config: ckpt.model_config,
        params: ckpt.params,
        preprocessor: art.artifact.preprocessor,
    };
    let scores = detector.score(&part.data.data)?;
    let name = split.name();
    let (mut report, roc, pr) = evaluate_scores(name, &part.labels.values, &scores, cfg.threshold)?;
    if cfg.compare_reference {
        report.compare_with(&cicids2017_cnn_lstm_reference(), 1e-6);
    }

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join(format!("report_{name}.json")), &report)?;
    if let Some(roc) = roc {
        export_curves(&roc, &out.join(format!("roc_{name}.csv")))?;
    }
    if let Some(pr) = pr {
        export_curves(&pr, &out.join(format!("pr_{name}.csv")))?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictSummary {
    pub rows: usize,
    pub malicious: usize,
    /// Categorical cells whose value was not seen during fitting.
    pub unseen_categories: usize,
    pub probabilities: Vec<f64>,
}

/// Predictions for a raw flow table, as written by [`cmd_predict`].
pub fn predict_table(detector: &Detector, table: &FlowTable, threshold: f64) -> Result<PredictSummary> {
    let (matrix, unseen) = detector.preprocessor.transform_table(table)?;
    if unseen > 0 {
        log::warn!("{unseen} categorical value(s) not seen during fitting were zero-encoded");
    }
    let probabilities = detector.score(&matrix.data)?;
    Ok(PredictSummary {
        rows: probabilities.len(),
        malicious: probabilities.iter().filter(|&&p| p >= threshold).count(),
        unseen_categories: unseen,
        probabilities,
    })
}

/// Writes `predictions.csv` (`row,probability,label`) to `out`. Probabilities
/// are printed in shortest round-trip form.
pub fn cmd_predict(checkpoint: &Path, inputs: &[PathBuf], out: &Path, cfg: &RunConfig) -> Result<PredictSummary> {
    let detector = Detector::load(checkpoint)?;
    let files = expand_inputs(inputs)?;
    let table = load_csv(&files)?;
    let summary = predict_table(&detector, &table, cfg.threshold)?;
    let mut text = String::from("row,probability,label\n");
    for (i, &p) in summary.probabilities.iter().enumerate() {
        text.push_str(&format!("{i},{p},{}\n", label_for(p, cfg.threshold)));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join(PREDICTIONS_FILE);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    cfg.echo(out, "predict", &files)?;
    Ok(summary)
}

/// Parses a `PREDICTIONS_FILE` back into probabilities.
pub fn read_predictions(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .map(|l| {
            l.split(',')
                .nth(1)
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| Error::Invalid(format!("{}: bad line `{l}`", path.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_order_is_defaults_file_flags() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.json");
        std::fs::write(&file, r#"{"seed": 5, "batch_size": 32, "lstm_units": 16}"#).unwrap();
        let mut flags = Map::new();
        flags.insert("batch_size".into(), 128.into());
        let cfg = RunConfig::resolve(Some(&file), &flags).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.lstm_units, 16);
        assert_eq!(cfg.batch_size, 128);
        assert_eq!(cfg.max_epochs, 20);
        assert_eq!(cfg.model_config(12).seed, SeedSet::from_master(5).init);
    }

    #[test]
    fn unknown_and_invalid_keys_are_rejected() {
        let mut flags = Map::new();
        flags.insert("lstm_unit".into(), 3.into());
        assert!(matches!(RunConfig::resolve(None, &flags), Err(Error::Config(_))));
        let mut flags = Map::new();
        flags.insert("threshold".into(), 1.5.into());
        assert!(RunConfig::resolve(None, &flags).is_err());
    }

    #[test]
    fn labels_follow_threshold() {
        assert_eq!(label_for(0.5, 0.5), "malicious");
        assert_eq!(label_for(0.4999, 0.5), "benign");
    }
}
