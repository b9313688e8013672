//! Diffusion tensor fitting and the MD, FA, helix-angle and E2A maps.

pub mod eigen;
mod error;
pub mod export;
mod fit;
pub mod maps;
mod protocol;

pub use error::{DtiError, Result};
pub use fit::{fit_tensors, simulate_signals, TensorField};
pub use maps::{compute_maps, local_basis, LocalBasis, MapSet, Triad};
pub use protocol::{fibonacci_hemisphere, DiffusionProtocol};
