//! The full stack: conv/ReLU/pool blocks, the map-to-sequence bridge, LSTM,
//! dropout, a ReLU dense layer and a sigmoid output unit.
//!
//! The bridge turns the last pooled map `[C × L']` into `L'` timesteps of
//! `C` features each, so the LSTM runs along the (down-sampled) feature axis.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ModelConfig;
use super::layers::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, dropout_apply, maxpool1d_backward,
    maxpool1d_forward, relu, Activation,
};
use super::lstm::{lstm_backward, lstm_forward, LstmCache};
use super::params::Parameters;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Rows per gradient-accumulation chunk. Fixed so the floating-point
/// reduction order does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Inference,
    /// Dropout active; row `i` draws its mask from stream `i` of a ChaCha8
    /// generator seeded with `dropout_seed`.
    Training { dropout_seed: u64 },
}

#[derive(Clone, Debug)]
pub struct BlockCache<T> {
    pub input: Tensor<T>,
    /// Post-ReLU conv output.
    pub activated: Tensor<T>,
    pub argmax: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct RowCache<T> {
    pub blocks: Vec<BlockCache<T>>,
    pub lstm: LstmCache<T>,
    pub dropout_mask: Option<Vec<T>>,
    pub dropped: Tensor<T>,
    pub dense_out: Tensor<T>,
    pub prob: Tensor<T>,
}

/// Activations saved by a training-mode forward pass, one entry per row.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    pub rows: Vec<RowCache<T>>,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput<T> {
    pub probs: Vec<T>,
    pub cache: Option<ForwardCache<T>>,
}

fn forward_row<T: Scalar>(
    config: &ModelConfig,
    params: &Parameters<T>,
    features: &[T],
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(T, Option<RowCache<T>>)> {
    let keep = dropout_rng.is_some();
    let mut x = Tensor::from_vec(&[1, features.len()], features.to_vec())?;
    let mut blocks = Vec::with_capacity(params.conv.len());
    for (i, conv) in params.conv.iter().enumerate() {
        let mut a = conv1d_forward(&x, &conv.weight, &conv.bias)
            .map_err(|e| Error::shape(format!("conv block {i}"), e.to_string()))?;
        a.data_mut().iter_mut().for_each(|v| *v = relu(*v));
        let (pooled, argmax) = maxpool1d_forward(&a, config.pool_size)
            .map_err(|e| Error::shape(format!("pool block {i}"), e.to_string()))?;
        if keep {
            blocks.push(BlockCache {
                input: x,
                activated: a,
                argmax,
            });
        }
        x = pooled;
    }
    let seq = x.transpose2()?;
    let (h_last, lstm_cache) = lstm_forward(&seq, &params.lstm)?;
    let (dropped, mask) = match dropout_rng {
        Some(rng) => dropout_apply(&h_last, config.dropout_rate, rng, true)?,
        None => (h_last, None),
    };
    let dense_out = dense_forward(&dropped, &params.dense.weight, &params.dense.bias, Activation::Relu)
        .map_err(|e| Error::shape("dense", e.to_string()))?;
    let prob = dense_forward(&dense_out, &params.output.weight, &params.output.bias, Activation::Sigmoid)
        .map_err(|e| Error::shape("output", e.to_string()))?;
    let p = prob.data()[0];
    let cache = keep.then_some(RowCache {
        blocks,
        lstm: lstm_cache,
        dropout_mask: mask,
        dropped,
        dense_out,
        prob,
    });
    Ok((p, cache))
}

/// Runs a `[B × F]` batch. Rows are independent and evaluated in parallel.
pub fn model_forward<T: Scalar>(
    config: &ModelConfig,
    params: &Parameters<T>,
    batch: &Tensor<T>,
    mode: Mode,
) -> Result<ForwardOutput<T>> {
    let &[b, f] = batch.shape() else {
        return Err(Error::shape("input", format!("batch must be [B × F], got {:?}", batch.shape())));
    };
    if f != config.input_features {
        return Err(Error::shape(
            "input",
            format!("expected {} features, got {f}", config.input_features),
        ));
    }
    let data = batch.data();
    let rows: Vec<(T, Option<RowCache<T>>)> = (0..b)
        .into_par_iter()
        .map(|i| {
            let x = &data[i * f..(i + 1) * f];
            match mode {
                Mode::Inference => forward_row(config, params, x, None),
                Mode::Training { dropout_seed } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
                    rng.set_stream(i as u64);
                    forward_row(config, params, x, Some(&mut rng))
                }
            }
        })
        .collect::<Result<_>>()?;
    let mut probs = Vec::with_capacity(b);
    let mut caches = Vec::with_capacity(b);
    for (p, c) in rows {
        probs.push(p);
        caches.extend(c);
    }
    let cache = matches!(mode, Mode::Training { .. }).then_some(ForwardCache { rows: caches });
    Ok(ForwardOutput { probs, cache })
}

/// Inference-mode probabilities for a `[B × F]` batch.
pub fn predict_proba<T: Scalar>(config: &ModelConfig, params: &Parameters<T>, batch: &Tensor<T>) -> Result<Vec<T>> {
    Ok(model_forward(config, params, batch, Mode::Inference)?.probs)
}

fn backward_row<T: Scalar>(params: &Parameters<T>, cache: &RowCache<T>, d_prob: T, grads: &mut Parameters<T>) {
    let d_dense = dense_backward(
        &cache.dense_out,
        &params.output.weight,
        &cache.prob,
        &[d_prob],
        Activation::Sigmoid,
        &mut grads.output.weight,
        &mut grads.output.bias,
    );
    let mut d_h = dense_backward(
        &cache.dropped,
        &params.dense.weight,
        &cache.dense_out,
        &d_dense,
        Activation::Relu,
        &mut grads.dense.weight,
        &mut grads.dense.bias,
    );
    if let Some(mask) = &cache.dropout_mask {
        for (g, &m) in d_h.iter_mut().zip(mask) {
            *g *= m;
        }
    }
    let d_seq = lstm_backward(&params.lstm, &cache.lstm, &d_h, &mut grads.lstm);
    let mut d_pooled = d_seq.transpose2().expect("rank 2");
    for (i, block) in cache.blocks.iter().enumerate().rev() {
        let mut d_act = maxpool1d_backward(&d_pooled, &block.argmax, block.activated.shape());
        for (g, &a) in d_act.data_mut().iter_mut().zip(block.activated.data()) {
            if a <= T::zero() {
                *g = T::zero();
            }
        }
        let conv_grads = &mut grads.conv[i];
        let d_in = conv1d_backward(
            &block.input,
            &params.conv[i].weight,
            &d_act,
            &mut conv_grads.weight,
            &mut conv_grads.bias,
            i > 0,
        );
        if let Some(d_in) = d_in {
            d_pooled = d_in;
        }
    }
}

/// Exact gradients of the loss with respect to every parameter, given
/// `dL/dp` per row of the batch that produced `cache`.
pub fn model_backward<T: Scalar>(
    config: &ModelConfig,
    params: &Parameters<T>,
    cache: &ForwardCache<T>,
    d_probs: &[T],
) -> Result<Parameters<T>> {
    if cache.rows.len() != d_probs.len() {
        return Err(Error::shape(
            "backward",
            format!("cache holds {} rows, got {} gradients", cache.rows.len(), d_probs.len()),
        ));
    }
    if cache.rows.first().is_some_and(|r| r.blocks.len() != config.conv_blocks.len()) {
        return Err(Error::shape("backward", "cache does not match the configured conv depth"));
    }
    let zero = params.zeros_like();
    let partials: Vec<Parameters<T>> = cache
        .rows
        .par_chunks(GRAD_CHUNK)
        .zip(d_probs.par_chunks(GRAD_CHUNK))
        .map(|(rows, dps)| {
            let mut g = zero.clone();
            for (row, &dp) in rows.iter().zip(dps) {
                backward_row(params, row, dp, &mut g);
            }
            g
        })
        .collect();
    let mut total = zero;
    for g in &partials {
        total.add_assign(g);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::config::ConvBlock;
    use crate::nn::params::init_params;
    use rand::Rng;

    fn tiny() -> ModelConfig {
        ModelConfig {
            input_features: 8,
            conv_blocks: vec![ConvBlock {
                filters: 2,
                kernel_size: 3,
            }],
            pool_size: 2,
            lstm_units: 3,
            dropout_rate: 0.25,
            dense_units: 4,
            seed: 5,
        }
    }

    fn batch(b: usize, f: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(&[b, f], (0..b * f).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn outputs_are_probabilities_and_deterministic() {
        let cfg = ModelConfig::default_for(16);
        let p: Parameters<f32> = init_params(&cfg, 3).unwrap();
        let x = batch(5, 16, 1).cast::<f32>();
        let a = predict_proba(&cfg, &p, &x).unwrap();
        let b = predict_proba(&cfg, &p, &x).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn permuting_rows_permutes_outputs() {
        let cfg = tiny();
        let p: Parameters<f64> = init_params(&cfg, 1).unwrap();
        let x = batch(6, 8, 2);
        let out = predict_proba(&cfg, &p, &x).unwrap();
        let perm = [3, 0, 5, 1, 4, 2];
        let mut permuted = Vec::new();
        for &i in &perm {
            permuted.extend_from_slice(&x.data()[i * 8..(i + 1) * 8]);
        }
        let px = Tensor::from_vec(&[6, 8], permuted).unwrap();
        let pout = predict_proba(&cfg, &p, &px).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(pout[k], out[i]);
        }
    }

    #[test]
    fn wrong_width_names_input_layer() {
        let cfg = tiny();
        let p: Parameters<f64> = init_params(&cfg, 1).unwrap();
        let err = predict_proba(&cfg, &p, &batch(2, 9, 0)).unwrap_err();
        assert!(err.to_string().contains("input"), "{err}");
    }

    #[test]
    fn cache_only_in_training_mode() {
        let cfg = tiny();
        let p: Parameters<f64> = init_params(&cfg, 1).unwrap();
        let x = batch(3, 8, 0);
        assert!(model_forward(&cfg, &p, &x, Mode::Inference).unwrap().cache.is_none());
        let out = model_forward(&cfg, &p, &x, Mode::Training { dropout_seed: 1 }).unwrap();
        assert_eq!(out.cache.unwrap().rows.len(), 3);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let cfg = tiny();
        let p: Parameters<f64> = init_params(&cfg, 1).unwrap();
        let out = model_forward(&cfg, &p, &batch(4, 8, 3), Mode::Training { dropout_seed: 9 }).unwrap();
        let g = model_backward(&cfg, &p, out.cache.as_ref().unwrap(), &[0.0; 4]).unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
        assert!(model_backward(&cfg, &p, out.cache.as_ref().unwrap(), &[0.0; 3]).is_err());
    }
}
