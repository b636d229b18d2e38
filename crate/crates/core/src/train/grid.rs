use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trainer::{train, Grid, TrainConfig, TrainOutcome, TrainingSet};
use crate::error::{Error, Result};
use crate::nn::ModelConfig;
use crate::seeds::derive;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellOutcome {
    Finished { val_loss: f64, best_epoch: usize, epochs: usize },
    Failed { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub outcome: CellOutcome,
}

impl GridCell {
    pub fn val_loss(&self) -> Option<f64> {
        match self.outcome {
            CellOutcome::Finished { val_loss, .. } => Some(val_loss),
            CellOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GridResult {
    pub best_config: TrainConfig,
    pub best_index: usize,
    pub best: TrainOutcome,
    pub cells: Vec<GridCell>,
}

impl GridResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("learning_rate,batch_size,seed,status,val_loss,best_epoch,epochs\n");
        for c in &self.cells {
            match &c.outcome {
                CellOutcome::Finished {
                    val_loss,
                    best_epoch,
                    epochs,
                } => s.push_str(&format!(
                    "{},{},{},finished,{},{},{}\n",
                    c.learning_rate, c.batch_size, c.seed, val_loss, best_epoch, epochs
                )),
                CellOutcome::Failed { .. } => s.push_str(&format!(
                    "{},{},{},failed,,,\n",
                    c.learning_rate, c.batch_size, c.seed
                )),
            }
        }
        s
    }
}

/// Minimum validation loss; ties go to the lower learning rate, then the
/// smaller batch. Failed cells never win.
pub fn select_best(cells: &[GridCell]) -> Option<usize> {
    cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.val_loss().map(|l| (i, l, c)))
        .min_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then(a.2.learning_rate.total_cmp(&b.2.learning_rate))
                .then(a.2.batch_size.cmp(&b.2.batch_size))
        })
        .map(|(i, _, _)| i)
}

/// Trains one model per (learning rate, batch size) cell, each with its own
/// seed derived from `base.seed` and the cell index.
pub fn grid_search(config: &ModelConfig, base: &TrainConfig, grid: &Grid, data: &TrainingSet) -> Result<GridResult> {
    if grid.learning_rates.is_empty() || grid.batch_sizes.is_empty() {
        return Err(Error::Config("grid needs at least one learning rate and one batch size".into()));
    }
    let plan: Vec<(f64, usize, u64)> = grid
        .learning_rates
        .iter()
        .flat_map(|&lr| grid.batch_sizes.iter().map(move |&bs| (lr, bs)))
        .enumerate()
        .map(|(k, (lr, bs))| (lr, bs, derive(base.seed, &format!("grid-cell-{k}"))))
        .collect();

    let runs: Vec<(GridCell, Option<TrainOutcome>)> = plan
        .par_iter()
        .map(|&(learning_rate, batch_size, seed)| {
            let tc = TrainConfig {
                learning_rate,
                batch_size,
                seed,
                grid: None,
                ..base.clone()
            };
            let cfg = ModelConfig {
                seed: derive(seed, "init"),
                ..config.clone()
            };
            match train(&cfg, &tc, data) {
                Ok(outcome) => {
                    let best = outcome.history.best().copied();
                    let cell = GridCell {
                        learning_rate,
                        batch_size,
                        seed,
                        outcome: CellOutcome::Finished {
                            val_loss: best.map_or(f64::INFINITY, |b| b.val_loss),
                            best_epoch: outcome.history.best_epoch,
                            epochs: outcome.history.epochs.len(),
                        },
                    };
                    (cell, Some(outcome))
                }
                Err(e) => {
                    log::warn!("grid cell lr={learning_rate} batch={batch_size} failed: {e}");
                    let cell = GridCell {
                        learning_rate,
                        batch_size,
                        seed,
                        outcome: CellOutcome::Failed { reason: e.to_string() },
                    };
                    (cell, None)
                }
            }
        })
        .collect();

    let cells: Vec<GridCell> = runs.iter().map(|(c, _)| c.clone()).collect();
    let best_index = select_best(&cells).ok_or(Error::GridExhausted)?;
    let (cell, outcome) = runs.into_iter().nth(best_index).expect("index in range");
    Ok(GridResult {
        best_config: TrainConfig {
            learning_rate: cell.learning_rate,
            batch_size: cell.batch_size,
            seed: cell.seed,
            grid: None,
            ..base.clone()
        },
        best_index,
        best: outcome.expect("finished cell has an outcome"),
        cells,
    })
}
