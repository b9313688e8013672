//! Differentiable layers for real and complex-valued networks.

pub mod activation;
pub mod conv;
pub mod dropout;
mod kernels;
pub mod loss;
pub mod norm;
pub mod pool;

pub use activation::{mod_relu, relu, sigmoid, split_sigmoid};
pub use conv::{complex_conv, complex_transpose_conv, conv, transpose_conv, ComplexKernel, ConvSpec};
pub use dropout::complex_dropout;
pub use loss::{l1, l2, magnitude_loss, Norm};
pub use norm::{batch_norm, BatchStats, Mode, RunningStats};
pub use pool::{avg_pool, magnitude_max_pool, max_pool, PoolSpec};
