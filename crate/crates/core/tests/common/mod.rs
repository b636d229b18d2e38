#![allow(dead_code)]

use ids_core::nn::{
    model_backward, model_forward, ConvBlock, LstmParams, Mode, ModelConfig, Parameters, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// F=8, one conv block of 2 filters (kernel 3), pool 2, LSTM H=3, dense 4.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        input_features: 8,
        conv_blocks: vec![ConvBlock {
            filters: 2,
            kernel_size: 3,
        }],
        pool_size: 2,
        lstm_units: 3,
        dropout_rate: 0.2,
        dense_units: 4,
        seed: 17,
    }
}

pub fn random_batch(b: usize, f: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_vec(&[b, f], (0..b * f).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Binary cross-entropy written out directly, independent of the library.
pub fn bce(probs: &[f64], labels: &[u8]) -> f64 {
    let n = probs.len() as f64;
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(1e-7, 1.0 - 1e-7);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / n
}

pub fn d_bce(probs: &[f64], labels: &[u8]) -> Vec<f64> {
    let n = probs.len() as f64;
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(1e-7, 1.0 - 1e-7);
            if y == 1 {
                -1.0 / (p * n)
            } else {
                1.0 / ((1.0 - p) * n)
            }
        })
        .collect()
}

pub struct GradCheck {
    pub max_rel_error: f64,
    /// Worst relative error per parameter tensor name.
    pub per_tensor: Vec<(String, f64)>,
    pub checked: usize,
}

/// Relative error with a small absolute floor on the denominator so that
/// components that are zero on both sides do not divide by zero.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

/// Central finite differences against `model_backward` on every parameter.
pub fn gradient_check(cfg: &ModelConfig, params: &Parameters<f64>, x: &Tensor<f64>, y: &[u8], eps: f64) -> GradCheck {
    let mode = Mode::Training { dropout_seed: 99 };
    let out = model_forward(cfg, params, x, mode).unwrap();
    let dp = d_bce(&out.probs, y);
    let analytic = model_backward(cfg, params, out.cache.as_ref().unwrap(), &dp)
        .unwrap()
        .to_flat();

    let loss_at = |p: &Parameters<f64>| bce(&model_forward(cfg, p, x, mode).unwrap().probs, y);
    let base = params.to_flat();
    let mut probe = params.clone();
    let mut numeric = vec![0.0; base.len()];
    for k in 0..base.len() {
        let mut v = base.clone();
        v[k] = base[k] + eps;
        probe.load_flat(&v).unwrap();
        let up = loss_at(&probe);
        v[k] = base[k] - eps;
        probe.load_flat(&v).unwrap();
        let down = loss_at(&probe);
        numeric[k] = (up - down) / (2.0 * eps);
    }

    let mut per_tensor = Vec::new();
    let mut off = 0;
    let mut max_rel = 0.0f64;
    for (name, t) in params.names().into_iter().zip(params.tensors()) {
        let worst = (off..off + t.len())
            .map(|k| rel_error(analytic[k], numeric[k]))
            .fold(0.0, f64::max);
        max_rel = max_rel.max(worst);
        per_tensor.push((name, worst));
        off += t.len();
    }
    GradCheck {
        max_rel_error: max_rel,
        per_tensor,
        checked: base.len(),
    }
}

fn oracle_sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Step-by-step LSTM written independently of the library: each gate is its
/// own pre-activation function, accumulated in the order W·x, U·h, b.
pub fn lstm_oracle(seq: &[Vec<f64>], p: &LstmParams<f64>) -> Vec<f64> {
    let h = p.u.shape()[1];
    let d = p.w.shape()[1];
    let (w, u, b) = (p.w.data(), p.u.data(), p.b.data());
    let pre = |row: usize, x: &[f64], hp: &[f64]| -> f64 {
        let mut s = 0.0;
        for k in 0..d {
            s += w[row * d + k] * x[k];
        }
        for k in 0..h {
            s += u[row * h + k] * hp[k];
        }
        s + b[row]
    };
    let mut hs = vec![0.0; h];
    let mut cs = vec![0.0; h];
    for x in seq {
        let mut nh = vec![0.0; h];
        let mut nc = vec![0.0; h];
        for j in 0..h {
            let i_gate = oracle_sigmoid(pre(j, x, &hs));
            let f_gate = oracle_sigmoid(pre(h + j, x, &hs));
            let g_cand = pre(2 * h + j, x, &hs).tanh();
            let o_gate = oracle_sigmoid(pre(3 * h + j, x, &hs));
            nc[j] = f_gate * cs[j] + i_gate * g_cand;
            nh[j] = o_gate * nc[j].tanh();
        }
        hs = nh;
        cs = nc;
    }
    hs
}

/// Two well-separated Gaussian blobs in the first two features, zero-padded
/// to `features` columns.
pub fn blobs(n: usize, features: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
    use rand_distr::{Distribution, Normal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let y = (i % 2) as u8;
        let center = if y == 1 { 2.5 } else { -2.5 };
        let mut row = vec![center + noise.sample(&mut rng), center + noise.sample(&mut rng)];
        row.resize(features, 0.0);
        xs.push(row);
        ys.push(y);
    }
    (xs, ys)
}

/// Random binary labels and scores; roughly a third of the scores are
/// rounded to one decimal so ties occur.
pub fn random_scored(rng: &mut ChaCha8Rng, n: usize) -> (Vec<u8>, Vec<f64>) {
    let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.4))).collect();
    let scores = labels
        .iter()
        .map(|&y| {
            let s: f64 = (rng.gen::<f64>() + 0.3 * f64::from(y)).min(1.0);
            if rng.gen_bool(0.3) {
                (s * 10.0).round() / 10.0
            } else {
                s
            }
        })
        .collect();
    (labels, scores)
}

/// (tp, tn, fp, fn) by visiting each sample.
pub fn recount(labels: &[u8], scores: &[f64], threshold: f64) -> (u64, u64, u64, u64) {
    let mut c = (0, 0, 0, 0);
    for i in 0..labels.len() {
        let predicted = scores[i] >= threshold;
        let actual = labels[i] == 1;
        if predicted && actual {
            c.0 += 1;
        } else if !predicted && !actual {
            c.1 += 1;
        } else if predicted {
            c.2 += 1;
        } else {
            c.3 += 1;
        }
    }
    c
}

/// Probability that a random positive outscores a random negative, ties
/// counted as one half.
pub fn concordance_auc(labels: &[u8], scores: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Average precision by recomputing precision and recall from scratch at
/// every distinct score, highest first.
pub fn step_sum_ap(labels: &[u8], scores: &[f64]) -> f64 {
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let positives = labels.iter().filter(|&&y| y == 1).count() as f64;
    let mut ap = 0.0;
    let mut last_recall = 0.0;
    for t in thresholds {
        let (tp, _, fp, _) = recount(labels, scores, t);
        let recall = tp as f64 / positives;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - last_recall) * precision;
        last_recall = recall;
    }
    ap
}

/// Small, quick-to-train run configuration for pipeline tests.
pub fn quick_run_config(seed: u64) -> ids_core::pipeline::RunConfig {
    ids_core::pipeline::RunConfig {
        seed,
        conv_blocks: vec![ConvBlock {
            filters: 6,
            kernel_size: 3,
        }],
        lstm_units: 6,
        dense_units: 8,
        max_epochs: 3,
        batch_size: 32,
        learning_rate: 5e-3,
        ..Default::default()
    }
}

/// Writes a synthetic raw flow CSV and returns its path.
pub fn write_flows(dir: &std::path::Path, name: &str, rows: usize, seed: u64, dirty: bool) -> std::path::PathBuf {
    use ids_core::synth::{write_synth_flows, FlowSynthOptions};
    let path = dir.join(name);
    let opts = FlowSynthOptions {
        rows,
        seed,
        dirty_fraction: if dirty { 0.02 } else { 0.0 },
        duplicate_fraction: if dirty { 0.01 } else { 0.0 },
        ..Default::default()
    };
    write_synth_flows(&opts, &path).unwrap();
    path
}

/// A preprocess + train run on synthetic flows, kept on disk for the test.
pub struct Trained {
    pub dir: tempfile::TempDir,
    pub flows: std::path::PathBuf,
    pub artifacts: std::path::PathBuf,
    pub checkpoint: std::path::PathBuf,
}

pub fn train_fixture(rows: usize, seed: u64) -> Trained {
    use ids_core::pipeline::{cmd_preprocess, cmd_train};
    let dir = tempfile::tempdir().unwrap();
    let flows = write_flows(dir.path(), "flows.csv", rows, seed, true);
    let artifacts = dir.path().join("artifacts");
    let checkpoint = dir.path().join("checkpoint");
    let cfg = quick_run_config(seed);
    cmd_preprocess(std::slice::from_ref(&flows), &artifacts, &cfg).unwrap();
    cmd_train(&artifacts, &checkpoint, &cfg).unwrap();
    Trained {
        dir,
        flows,
        artifacts,
        checkpoint,
    }
}

/// Blob rows scaled with a scaler fitted on the training part.
pub struct Blobs {
    pub fm: ids_core::features::FeatureMatrix,
    pub split: ids_core::features::DatasetSplit,
}

pub fn blob_data(n: usize, features: usize, seed: u64) -> Blobs {
    let (xs, ys) = blobs(n, features, seed);
    let raw = ids_core::features::Matrix::from_rows(&xs).unwrap();
    let labels = ids_core::ingest::LabelVector::from_values(ys);
    let split = ids_core::features::split(n, &labels, seed).unwrap();
    let names: Vec<String> = (0..features).map(|j| format!("f{j}")).collect();
    let scaler = ids_core::features::fit_scaler(&names, &raw.select_rows(&split.train_idx)).unwrap();
    let data = ids_core::features::apply_scaler(&scaler, &names, &raw).unwrap();
    Blobs {
        fm: ids_core::features::FeatureMatrix {
            data,
            feature_names: names,
            labels,
        },
        split,
    }
}
