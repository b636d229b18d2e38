//! Trains the default CNN-LSTM stack on two Gaussian blobs and prints the
//! per-epoch history.
//!
//! cargo run --release --example train_blobs [-- seed]

use std::time::Instant;

use ids_core::features::{apply_scaler, fit_scaler, split, FeatureMatrix};
use ids_core::nn::ModelConfig;
use ids_core::synth::blobs;
use ids_core::train::{evaluate_loss, train, TrainConfig, TrainingSet};

fn main() -> ids_core::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(1, |s| s.parse().expect("integer seed"));
    let features = 16;
    let (raw, labels) = blobs(2000, features, seed);
    let parts = split(raw.rows, &labels, seed)?;
    let names: Vec<String> = (0..features).map(|j| format!("f{j}")).collect();
    let scaler = fit_scaler(&names, &raw.select_rows(&parts.train_idx))?;
    let fm = FeatureMatrix {
        data: apply_scaler(&scaler, &names, &raw)?,
        feature_names: names,
        labels,
    };
    let data = TrainingSet::from_split(&fm, &parts);

    let cfg = ModelConfig {
        seed,
        ..ModelConfig::default_for(features)
    };
    println!("{} parameters", cfg.shapes()?.parameter_count());
    let start = Instant::now();
    let out = train(&cfg, &TrainConfig { seed, ..TrainConfig::default() }, &data)?;
    print!("{}", out.history.to_csv());

    let test = fm.select(&parts.test_idx);
    let x: Vec<f32> = test.data.data.iter().map(|&v| v as f32).collect();
    let (loss, acc) = evaluate_loss(&cfg, &out.params, &x, &test.labels.values)?;
    println!(
        "best epoch {}; test loss {loss:.4}, accuracy {acc:.4}; {:.1?}",
        out.history.best_epoch,
        start.elapsed()
    );
    Ok(())
}
