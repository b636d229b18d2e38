//! Compares analytic gradients against central finite differences on a tiny
//! model in double precision.
//!
//! cargo run --example gradient_check

use ids_core::nn::{init_params, model_backward, model_forward, ConvBlock, Mode, ModelConfig, Parameters, Tensor};
use ids_core::train::bce_loss;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;

fn loss(cfg: &ModelConfig, p: &Parameters<f64>, x: &Tensor<f64>, y: &[u8], mode: Mode) -> f64 {
    let out = model_forward(cfg, p, x, mode).unwrap();
    bce_loss(&out.probs, y).unwrap().0
}

fn main() {
    let cfg = ModelConfig {
        input_features: 8,
        conv_blocks: vec![ConvBlock {
            filters: 2,
            kernel_size: 3,
        }],
        pool_size: 2,
        lstm_units: 3,
        dropout_rate: 0.2,
        dense_units: 4,
        seed: 0,
    };
    let mut params: Parameters<f64> = init_params(&cfg, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // Zero biases put ReLU units exactly on their kink, where finite
    // differences are meaningless; nudge every parameter off it.
    let jittered: Vec<f64> = params.to_flat().iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect();
    params.load_flat(&jittered).unwrap();
    let x = Tensor::from_vec(&[4, 8], (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let y = [1, 0, 1, 0];
    // A fixed dropout seed keeps the mask identical across perturbations.
    let mode = Mode::Training { dropout_seed: 11 };

    let out = model_forward(&cfg, &params, &x, mode).unwrap();
    let (_, d_probs) = bce_loss(&out.probs, &y).unwrap();
    let grads = model_backward(&cfg, &params, out.cache.as_ref().unwrap(), &d_probs).unwrap();

    let analytic = grads.to_flat();
    let base = params.to_flat();
    let mut offset = 0;
    for (name, t) in params.names().iter().zip(params.tensors()) {
        let mut worst: f64 = 0.0;
        for k in offset..offset + t.len() {
            let mut probe = params.clone();
            let mut flat = base.clone();
            flat[k] = base[k] + EPS;
            probe.load_flat(&flat).unwrap();
            let up = loss(&cfg, &probe, &x, &y, mode);
            flat[k] = base[k] - EPS;
            probe.load_flat(&flat).unwrap();
            let down = loss(&cfg, &probe, &x, &y, mode);
            let numeric = (up - down) / (2.0 * EPS);
            let scale = analytic[k].abs().max(numeric.abs()).max(1e-7);
            worst = worst.max((analytic[k] - numeric).abs() / scale);
        }
        println!("{name:<14} {:>4} values  max relative error {worst:.2e}", t.len());
        offset += t.len();
    }
}
