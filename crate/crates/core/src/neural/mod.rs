//! From-scratch recurrent regression network.
//!
//! A base LSTM layer, an optional second LSTM or GRU layer of the same width,
//! inverted dropout after each recurrent layer and a single linear output
//! unit. Everything is `f64`; gradients come from exact backpropagation
//! through time and can be checked against [`numeric_gradient`].

mod adam;
mod gradcheck;
pub mod gru;
mod loss;
pub mod lstm;
mod network;
mod params;
mod spec;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use gradcheck::{max_relative_error, numeric_gradient};
pub use loss::{mse_loss, rmse};
pub use network::{backward, forward, predict, ForwardCache, Mode};
pub use params::{init_network, Gradients, LayerGradients, NetworkState, RecurrentWeights};
pub use spec::{CellKind, ExtraLayer, ModelSpec};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("non-finite activation in network output")]
    NonFiniteActivation,
    #[error("non-finite gradient component")]
    NonFiniteGradient,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
