//! Dense tensor kernels and the CNN-LSTM classifier with hand-written
//! reverse-mode gradients.

pub mod config;
pub mod layers;
pub mod lstm;
pub mod model;
pub mod params;
pub mod tensor;

pub use config::{BlockShape, ConvBlock, ModelConfig, ShapePlan};
pub use layers::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, dropout_apply, maxpool1d_backward,
    maxpool1d_forward, relu, sigmoid, Activation,
};
pub use lstm::{lstm_backward, lstm_forward, LstmCache};
pub use model::{model_backward, model_forward, predict_proba, ForwardCache, ForwardOutput, Mode};
pub use params::{init_params, ConvParams, DenseParams, LstmParams, Parameters};
pub use tensor::{Scalar, Tensor};
