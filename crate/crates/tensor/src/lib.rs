//! Dense real/complex tensors and reverse-mode automatic differentiation.
//!
//! [`Tensor`] is an immutable value; [`Graph`] records operations on
//! [`Var`] handles and computes gradients of a real scalar loss with
//! [`Graph::backward`].

mod error;
pub mod gradcheck;
mod graph;
pub mod io;
pub mod ops;
mod shape;
mod tensor;

pub use error::{Result, TensorError};
pub use graph::{BackwardFn, GradientPair, Gradients, Graph, ParamId, Var};
pub use num_complex::Complex64;
pub use shape::Shape;
pub use tensor::Tensor;
