//! Saves a freshly initialised model, reloads it, and shows that a single
//! flipped bit in the weight file is caught.
//!
//! cargo run --example checkpoint_roundtrip

use ids_core::nn::{init_params, ModelConfig};
use ids_core::train::{load_checkpoint, save_checkpoint, Checkpoint, TrainConfig, TrainHistory, WEIGHTS_FILE};

fn main() -> ids_core::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| ids_core::Error::io("tempdir", e))?;
    let cfg = ModelConfig::default_for(40);
    let ckpt = Checkpoint {
        params: init_params(&cfg, 1)?,
        model_config: cfg,
        train_config: TrainConfig::default(),
        history: TrainHistory::default(),
        preprocessing_digest: None,
    };
    save_checkpoint(&ckpt, dir.path())?;
    let back = load_checkpoint(dir.path())?;
    println!(
        "{} parameters reloaded, identical: {}, sha256 {}",
        back.params.count(),
        back == ckpt,
        back.weights_digest()
    );

    let w = dir.path().join(WEIGHTS_FILE);
    let mut bytes = std::fs::read(&w).map_err(|e| ids_core::Error::io(&w, e))?;
    bytes[1000] ^= 0x01;
    std::fs::write(&w, bytes).map_err(|e| ids_core::Error::io(&w, e))?;
    match load_checkpoint(dir.path()) {
        Ok(_) => println!("corruption went unnoticed"),
        Err(e) => println!("after flipping one bit: {e}"),
    }
    Ok(())
}
