//! A compact reverse-mode automatic differentiation engine over dense `f64`
//! tensors, sized for the image models in this workspace.
//!
//! Tensors are immutable and reference counted. Every operation that touches a
//! tensor requiring gradients records a backward closure; [`Tensor::backward`]
//! walks the recorded graph in reverse topological order and returns the
//! gradients of every leaf.
//!
//! Convolutions are lowered to `im2col` + GEMM (via `matrixmultiply`), which
//! keeps both the forward and the backward pass on the fast path.

mod error;
pub mod gradcheck;
pub mod io;
mod ops;
pub mod optim;
mod params;
mod tensor;

pub use error::{Result, TensorError};
pub use params::{init, ParamStore};
pub use tensor::{Gradients, Tensor};
