//! Deterministic layer engine: forward and backward passes for every layer a
//! FactorizeNet uses.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod init;
pub mod loss;
pub mod network;

use crate::tensor::Tensor;

pub use activation::{maxpool2d_backward, maxpool2d_forward, relu_backward, relu_forward, PoolOutput};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, batchnorm_forward_infer, batchnorm_forward_train, BatchNorm, BnCache, BnMode};
pub use conv::{conv2d_backward, conv2d_forward, conv2d_forward_counting, Conv2d};
pub use dense::{dense_backward, dense_forward, Dense};
pub use init::{glorot_limit, glorot_uniform_init, seeded_rng, SeededRng};
pub use loss::{softmax, softmax_crossentropy, SoftmaxLoss};
pub use network::{Layer, NamedLayer, Network, NetworkGrads, Role, Trace};

/// Gradients produced by one layer's backward pass.
#[derive(Debug, Clone)]
pub struct GradientRecord<T> {
    /// One entry per parameter tensor, in the layer's parameter order.
    pub params: Vec<Tensor<T>>,
    pub input: Tensor<T>,
}
