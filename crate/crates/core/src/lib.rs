//! Progressive depth factorization toolkit.
//!
//! Builds VGG-style networks whose convolutions sit anywhere between regular
//! (`f = 1`) and depthwise (`f = C_in`) grouping, trains them, and measures how
//! each layer's weight and activation distributions hold up under 8-bit affine
//! quantization.

pub mod arch;
pub mod data;
pub mod error;
pub mod introspect;
pub mod nn;
pub mod quant;
pub mod scalar;
pub mod sweep;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Network32 = nn::Network<f32>;
pub type Network64 = nn::Network<f64>;
pub type Conv2d32 = nn::Conv2d<f32>;
pub type Conv2d64 = nn::Conv2d<f64>;
