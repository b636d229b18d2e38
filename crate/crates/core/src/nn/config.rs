use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub filters: usize,
    pub kernel_size: usize,
}

/// Layer-stack hyperparameters. Convolutions are stride 1 with no padding;
/// every conv block is followed by ReLU and max pooling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_features: usize,
    pub conv_blocks: Vec<ConvBlock>,
    pub pool_size: usize,
    pub lstm_units: usize,
    pub dropout_rate: f64,
    pub dense_units: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Default stack: conv(64,3)+pool, conv(128,3)+pool, LSTM 64, dropout 0.2,
    /// dense 64 ReLU, dense 1 sigmoid.
    pub fn default_for(input_features: usize) -> Self {
        ModelConfig {
            input_features,
            conv_blocks: vec![
                ConvBlock {
                    filters: 64,
                    kernel_size: 3,
                },
                ConvBlock {
                    filters: 128,
                    kernel_size: 3,
                },
            ],
            pool_size: 2,
            lstm_units: 64,
            dropout_rate: 0.2,
            dense_units: 64,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    /// Computes every intermediate shape without touching any weights.
    pub fn shapes(&self) -> Result<ShapePlan> {
        if self.input_features == 0 {
            return Err(Error::Config("input_features must be positive".into()));
        }
        if self.conv_blocks.is_empty() {
            return Err(Error::Config("at least one conv block is required".into()));
        }
        if self.pool_size == 0 {
            return Err(Error::Config("pool_size must be positive".into()));
        }
        if self.lstm_units == 0 || self.dense_units == 0 {
            return Err(Error::Config("lstm_units and dense_units must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        let mut blocks = Vec::with_capacity(self.conv_blocks.len());
        let (mut channels, mut len) = (1, self.input_features);
        for (i, b) in self.conv_blocks.iter().enumerate() {
            if b.filters == 0 || b.kernel_size == 0 {
                return Err(Error::Config(format!("conv block {i}: filters and kernel must be positive")));
            }
            if b.kernel_size > len {
                return Err(Error::Config(format!(
                    "conv block {i}: kernel {} longer than input length {len}",
                    b.kernel_size
                )));
            }
            let conv_len = len - b.kernel_size + 1;
            let pooled_len = conv_len / self.pool_size;
            if pooled_len == 0 {
                return Err(Error::Config(format!(
                    "conv block {i}: length {conv_len} shorter than pool {}",
                    self.pool_size
                )));
            }
            blocks.push(BlockShape {
                in_channels: channels,
                in_len: len,
                out_channels: b.filters,
                kernel: b.kernel_size,
                conv_len,
                pooled_len,
            });
            channels = b.filters;
            len = pooled_len;
        }
        Ok(ShapePlan {
            blocks,
            seq_len: len,
            seq_dim: channels,
            hidden: self.lstm_units,
            dense: self.dense_units,
        })
    }

    /// Smallest feature count the conv/pool stack accepts.
    pub fn min_input_features(&self) -> usize {
        let mut len = 1;
        for b in self.conv_blocks.iter().rev() {
            len = len * self.pool_size + b.kernel_size - 1;
        }
        len
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockShape {
    pub in_channels: usize,
    pub in_len: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub conv_len: usize,
    pub pooled_len: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapePlan {
    pub blocks: Vec<BlockShape>,
    /// LSTM timesteps (pooled length of the last block).
    pub seq_len: usize,
    /// LSTM input width (channels of the last block).
    pub seq_dim: usize,
    pub hidden: usize,
    pub dense: usize,
}

impl ShapePlan {
    /// `(name, shape)` of every parameter tensor in storage order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("conv{i}.weight"), vec![b.out_channels, b.in_channels, b.kernel]));
            out.push((format!("conv{i}.bias"), vec![b.out_channels]));
        }
        let (h, d) = (self.hidden, self.seq_dim);
        out.push(("lstm.w".into(), vec![4 * h, d]));
        out.push(("lstm.u".into(), vec![4 * h, h]));
        out.push(("lstm.b".into(), vec![4 * h]));
        out.push(("dense.weight".into(), vec![self.dense, h]));
        out.push(("dense.bias".into(), vec![self.dense]));
        out.push(("output.weight".into(), vec![1, self.dense]));
        out.push(("output.bias".into(), vec![1]));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}
