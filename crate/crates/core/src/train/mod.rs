//! Loss, optimizer, training loop with early stopping, grid search and
//! checkpoint persistence.

pub mod adam;
pub mod checkpoint;
pub mod grid;
pub mod loss;
pub mod trainer;

pub use adam::{adam_step, adam_update, AdamHyper, AdamState};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, sha256_hex, Checkpoint, Manifest, FORMAT_VERSION, MANIFEST_FILE, WEIGHTS_FILE,
};
pub use grid::{grid_search, select_best, CellOutcome, GridCell, GridResult};
pub use loss::bce_loss;
pub use trainer::{
    evaluate_loss, train, train_with_observer, EpochStats, Grid, TrainConfig, TrainControl, TrainHistory,
    TrainObserver, TrainOutcome, TrainingSet,
};
