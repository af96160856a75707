//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records operations eagerly; [`Graph::backward`] sweeps the tape
//! in reverse. Convolutions are channels-last (`[batch, len, channels]`) and
//! lower to a single GEMM through im2col.

mod graph;
pub mod nn;
pub mod optim;
mod params;
mod tensor;

pub use graph::{ConvSpec, Gradients, Graph, Var};
pub use params::{normal, uniform_fan_in, ParamId, ParamStore};
pub use tensor::Tensor;
