//! CNN-LSTM network intrusion detection without a deep-learning framework.
//!
//! The pipeline runs flow-record CSVs through [`ingest`] (load, clean, label),
//! [`features`] (selection, scaling, one-hot, stratified split), trains the
//! [`nn`] classifier with [`train`], scores it with [`metrics`], and serves it
//! over newline-delimited JSON with [`serve`]. [`pipeline`] wires these into
//! the `preprocess` / `train` / `evaluate` / `predict` / `serve` commands.

pub mod error;
pub mod features;
pub mod ingest;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod seeds;
pub mod serve;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
