//! Minimal dense-tensor engine: reverse-mode differentiation and Adam.

mod adam;
mod graph;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use graph::{
    huber, huber_grad, BatchNormStats, Gradients, Graph, Mode, Var, BATCHNORM_EPS, BATCHNORM_MOMENTUM,
    MASK_SENTINEL,
};
pub use tensor::{exact_sum, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dropout probability {0} outside [0, 1)")]
    InvalidProbability(f64),
    #[error("backward needs a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
}
