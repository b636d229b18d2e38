use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::loss::bce_loss;
use crate::error::{Error, Result};
use crate::features::{DatasetSplit, FeatureMatrix};
use crate::nn::{init_params, model_backward, model_forward, predict_proba, Mode, ModelConfig, Parameters, Tensor};
use crate::seeds::{derive, mix64};

/// Rows per forward pass when evaluating a whole split.
const EVAL_CHUNK: usize = 2048;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            learning_rates: vec![1e-2, 1e-3, 1e-4],
            batch_sizes: vec![64, 128, 256],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 20,
            patience: 3,
            min_delta: 1e-4,
            seed: 0,
            grid: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size, patience and max_epochs must be at least 1".into()));
        }
        if self.min_delta.is_nan() || self.min_delta < 0.0 {
            return Err(Error::Config("min_delta must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were returned (lowest validation loss).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochStats> {
        self.epochs.get(self.best_epoch.checked_sub(1)?)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy
            ));
        }
        s
    }
}

/// Training and validation rows in model precision.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub n_features: usize,
    pub train_x: Vec<f32>,
    pub train_y: Vec<u8>,
    pub val_x: Vec<f32>,
    pub val_y: Vec<u8>,
}

fn gather(fm: &FeatureMatrix, idx: &[usize]) -> (Vec<f32>, Vec<u8>) {
    let mut x = Vec::with_capacity(idx.len() * fm.data.cols);
    for &i in idx {
        x.extend(fm.data.row(i).iter().map(|&v| v as f32));
    }
    (x, idx.iter().map(|&i| fm.labels.values[i]).collect())
}

impl TrainingSet {
    pub fn from_split(fm: &FeatureMatrix, split: &DatasetSplit) -> Self {
        let (train_x, train_y) = gather(fm, &split.train_idx);
        let (val_x, val_y) = gather(fm, &split.val_idx);
        TrainingSet {
            n_features: fm.data.cols,
            train_x,
            train_y,
            val_x,
            val_y,
        }
    }

    pub fn n_train(&self) -> usize {
        self.train_y.len()
    }
}

/// Mean loss and accuracy (threshold 0.5) with dropout off.
pub fn evaluate_loss(config: &ModelConfig, params: &Parameters<f32>, x: &[f32], y: &[u8]) -> Result<(f64, f64)> {
    let f = config.input_features;
    let n = y.len();
    if n == 0 {
        return Err(Error::Empty("evaluation set is empty".into()));
    }
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for start in (0..n).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(n);
        let batch = Tensor::from_vec(&[end - start, f], x[start * f..end * f].to_vec())?;
        let probs = predict_proba(config, params, &batch)?;
        let (l, _) = bce_loss(&probs, &y[start..end])?;
        loss_sum += l * (end - start) as f64;
        correct += probs
            .iter()
            .zip(&y[start..end])
            .filter(|(&p, &t)| u8::from(p >= 0.5) == t)
            .count();
    }
    Ok((loss_sum / n as f64, correct as f64 / n as f64))
}

/// Mutable handles passed to [`TrainObserver`] after each epoch.
pub struct TrainControl<'a> {
    pub params: &'a mut Parameters<f32>,
    pub learning_rate: &'a mut f64,
}

/// Hook invoked after each epoch's statistics and early-stopping bookkeeping.
pub trait TrainObserver {
    fn on_epoch_end(&mut self, _stats: &EpochStats, _control: &mut TrainControl<'_>) {}
}

impl TrainObserver for () {}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: Parameters<f32>,
    pub history: TrainHistory,
}

pub fn train(config: &ModelConfig, tc: &TrainConfig, data: &TrainingSet) -> Result<TrainOutcome> {
    train_with_observer(config, tc, data, &mut ())
}

/// Mini-batch Adam with early stopping on validation loss.
///
/// The returned parameters are always those of the epoch with the lowest
/// validation loss. The patience counter resets only when validation loss
/// beats the best value by more than `min_delta`.
pub fn train_with_observer(
    config: &ModelConfig,
    tc: &TrainConfig,
    data: &TrainingSet,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    config.validate()?;
    tc.validate()?;
    if data.n_features != config.input_features {
        return Err(Error::Config(format!(
            "model expects {} features, data has {}",
            config.input_features, data.n_features
        )));
    }
    if data.n_train() == 0 || data.val_y.is_empty() {
        return Err(Error::Empty("training and validation parts must be non-empty".into()));
    }
    let f = config.input_features;
    let mut params: Parameters<f32> = init_params(config, config.seed)?;
    let mut adam = AdamState::new(&params);
    let mut lr = tc.learning_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(derive(tc.seed, "shuffle"));
    let dropout_base = derive(tc.seed, "dropout");
    let mut order: Vec<usize> = (0..data.n_train()).collect();

    let mut history = TrainHistory::default();
    let mut best_params = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut patience_ref = f64::INFINITY;
    let mut wait = 0;
    let mut step: u64 = 0;

    for epoch in 1..=tc.max_epochs {
        order.shuffle(&mut rng);
        for (b, idx) in order.chunks(tc.batch_size).enumerate() {
            let mut x = Vec::with_capacity(idx.len() * f);
            for &i in idx {
                x.extend_from_slice(&data.train_x[i * f..(i + 1) * f]);
            }
            let y: Vec<u8> = idx.iter().map(|&i| data.train_y[i]).collect();
            let batch = Tensor::from_vec(&[idx.len(), f], x)?;
            let mode = Mode::Training {
                dropout_seed: mix64(dropout_base ^ step),
            };
            let out = model_forward(config, &params, &batch, mode)?;
            let (loss, d_probs) = bce_loss(&out.probs, &y)?;
            let non_finite = |what: &str| Error::NonFinite {
                what: what.into(),
                epoch,
                batch: b,
            };
            if !loss.is_finite() {
                return Err(non_finite("loss"));
            }
            let cache = out.cache.expect("training mode keeps a cache");
            let grads = model_backward(config, &params, &cache, &d_probs)?;
            adam_step(&mut params, &grads, &mut adam, lr).map_err(|_| non_finite("gradient"))?;
            step += 1;
        }

        let (train_loss, train_accuracy) = evaluate_loss(config, &params, &data.train_x, &data.train_y)?;
        let (val_loss, val_accuracy) = evaluate_loss(config, &params, &data.val_x, &data.val_y)?;
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(Error::NonFinite {
                what: "epoch loss".into(),
                epoch,
                batch: 0,
            });
        }
        let stats = EpochStats {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        };
        history.epochs.push(stats);
        log::debug!("epoch {epoch}: train {train_loss:.5} / val {val_loss:.5} (acc {val_accuracy:.4})");

        if val_loss < best_loss {
            best_loss = val_loss;
            history.best_epoch = epoch;
            best_params.clone_from(&params);
        }
        if val_loss < patience_ref - tc.min_delta {
            patience_ref = val_loss;
            wait = 0;
        } else {
            wait += 1;
        }
        observer.on_epoch_end(
            &stats,
            &mut TrainControl {
                params: &mut params,
                learning_rate: &mut lr,
            },
        );
        if wait >= tc.patience {
            history.stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        params: best_params,
        history,
    })
}
