//! Minimal differentiable-computation core: tensors, a recording tape,
//! layers, Adam and checkpoints.

pub mod checkpoint;
pub mod functional;
mod graph;
mod layers;
mod optim;
mod params;
mod tensor;

pub use graph::{Graph, Padding, Var};
pub use layers::{AttentionBlock, Conv1d, Dense, Dropout, LayerNorm, Projection};
pub use optim::{Adam, AdamConfig};
pub use params::{Grads, ParamId, ParamStore};
pub use tensor::Tensor;
