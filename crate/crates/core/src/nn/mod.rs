//! Minimal deterministic neural substrate: tensors, four layer kinds with
//! exact reverse-mode gradients, ADAM, splittable random streams and binary
//! checkpoints. Everything is `f64`.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod layer;
mod rng;
mod tensor;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use layer::{Backward, Gradients, Layer, LayerSpec, Network, Trace};
pub use rng::Rng;
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("layer {layer} ({kind}): expected shape {expected:?}, got {got:?}")]
    ShapeMismatch {
        layer: usize,
        kind: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("layer {layer} ({kind}): {reason}")]
    InvalidLayer {
        layer: usize,
        kind: &'static str,
        reason: String,
    },
    #[error("network has no layers")]
    EmptyNetwork,
    #[error("layer {layer}: expected {expected} parameters, got {got}")]
    ParamCount {
        layer: usize,
        expected: usize,
        got: usize,
    },
    #[error("layer {layer}: non-finite parameter")]
    NonFiniteParams { layer: usize },
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },
    #[error("gradient layout does not match optimizer state")]
    GradientShape,
}
