//! The twelve U-Net variants: 2D/3D, magnitude / magnitude+phase / complex,
//! all slices / single slice.

pub mod checkpoint;
mod config;
mod error;
mod network;

pub use config::{default_base_channels, DataMode, Dim, ModelConfig, SliceMode};
pub use error::{Result, UnetError};
pub use network::{count_parameters, Forward, Network, Param};
