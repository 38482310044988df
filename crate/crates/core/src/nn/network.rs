//! Sequential network with a fixed layer order and hand-written backprop.

use serde::{Deserialize, Serialize};

use super::activation::{maxpool2d_backward, maxpool2d_forward, relu_backward, relu_forward};
use super::batchnorm::{batchnorm_backward, batchnorm_forward_infer, batchnorm_forward_train, BatchNorm, BnCache};
use super::conv::{conv2d_backward, conv2d_forward, Conv2d};
use super::dense::{dense_backward, dense_forward, Dense};
use super::loss::{softmax, softmax_crossentropy};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// What a layer is for inside the macro-architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Stem,
    /// Plain 3x3 convolution of an unfactorized block.
    Conv,
    GroupConv,
    Pointwise,
    Bn,
    Relu,
    Pool,
    Dense,
    Output,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    BatchNorm(BatchNorm<T>),
    Relu,
    MaxPool2d { window: usize, stride: usize },
    Dense(Dense<T>),
    SoftmaxOutput,
}

impl<T> Layer<T> {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::BatchNorm(_) => "batch_norm",
            Layer::Relu => "relu",
            Layer::MaxPool2d { .. } => "max_pool2d",
            Layer::Dense(_) => "dense",
            Layer::SoftmaxOutput => "softmax_output",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedLayer<T> {
    pub name: String,
    pub role: Role,
    pub layer: Layer<T>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Network<T> {
    pub layers: Vec<NamedLayer<T>>,
}

#[derive(Debug, Clone)]
enum Cache<T> {
    Input(Tensor<T>),
    Bn(BnCache<T>),
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
}

/// Saved activations of a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    caches: Vec<Cache<T>>,
}

/// Gradients for every trainable tensor, in [`Network::params`] order.
#[derive(Debug, Clone)]
pub struct NetworkGrads<T> {
    pub params: Vec<Tensor<T>>,
    pub input: Tensor<T>,
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<NamedLayer<T>>) -> Self {
        Self { layers }
    }

    pub fn layer(&self, name: &str) -> Option<&NamedLayer<T>> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Number of layers before the trailing softmax, if any.
    fn logit_depth(&self) -> usize {
        match self.layers.last() {
            Some(NamedLayer {
                layer: Layer::SoftmaxOutput,
                ..
            }) => self.layers.len() - 1,
            _ => self.layers.len(),
        }
    }

    /// Trainable tensors: conv/dense weight and bias, batchnorm gamma and beta.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers
            .iter()
            .flat_map(|l| -> Vec<&Tensor<T>> {
                match &l.layer {
                    Layer::Conv2d(c) => vec![&c.weight, &c.bias],
                    Layer::BatchNorm(b) => vec![&b.gamma, &b.beta],
                    Layer::Dense(d) => vec![&d.weight, &d.bias],
                    _ => vec![],
                }
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| -> Vec<&mut Tensor<T>> {
                match &mut l.layer {
                    Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
                    Layer::BatchNorm(b) => vec![&mut b.gamma, &mut b.beta],
                    Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
                    _ => vec![],
                }
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Cast every parameter and statistic to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| NamedLayer {
                name: l.name.clone(),
                role: l.role,
                layer: match &l.layer {
                    Layer::Conv2d(c) => Layer::Conv2d(Conv2d {
                        weight: c.weight.cast(),
                        bias: c.bias.cast(),
                        groups: c.groups,
                        stride: c.stride,
                        padding: c.padding,
                    }),
                    Layer::BatchNorm(b) => Layer::BatchNorm(BatchNorm {
                        gamma: b.gamma.cast(),
                        beta: b.beta.cast(),
                        running_mean: b.running_mean.cast(),
                        running_var: b.running_var.cast(),
                        epsilon: U::lit(b.epsilon.to_f64_lossy()),
                        momentum: U::lit(b.momentum.to_f64_lossy()),
                    }),
                    Layer::Relu => Layer::Relu,
                    Layer::MaxPool2d { window, stride } => Layer::MaxPool2d {
                        window: *window,
                        stride: *stride,
                    },
                    Layer::Dense(d) => Layer::Dense(Dense {
                        weight: d.weight.cast(),
                        bias: d.bias.cast(),
                    }),
                    Layer::SoftmaxOutput => Layer::SoftmaxOutput,
                },
            })
            .collect();
        Network { layers }
    }

    /// Inference-mode forward through a single layer.
    pub fn layer_forward_infer(layer: &Layer<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        match layer {
            Layer::Conv2d(c) => conv2d_forward(x, c),
            Layer::BatchNorm(b) => batchnorm_forward_infer(x, b),
            Layer::Relu => Ok(relu_forward(x)),
            Layer::MaxPool2d { window, stride } => Ok(maxpool2d_forward(x, *window, *stride)?.output),
            Layer::Dense(d) => dense_forward(x, d),
            Layer::SoftmaxOutput => softmax(x),
        }
    }

    /// Inference-mode forward, calling `visit(index, output)` after every layer.
    pub fn forward_visit(&self, x: &Tensor<T>, mut visit: impl FnMut(usize, &Tensor<T>) -> Result<()>) -> Result<Tensor<T>> {
        let mut act = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            act = Self::layer_forward_infer(&l.layer, &act)?;
            visit(i, &act)?;
        }
        Ok(act)
    }

    /// Inference-mode logits (everything before the softmax).
    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut act = x.clone();
        for l in &self.layers[..self.logit_depth()] {
            act = Self::layer_forward_infer(&l.layer, &act)?;
        }
        Ok(act)
    }

    /// Inference-mode class probabilities.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        softmax(&self.logits(x)?)
    }

    /// Train-mode forward up to the logits; batchnorm running stats are updated.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, Trace<T>)> {
        let depth = self.logit_depth();
        let mut caches = Vec::with_capacity(depth);
        let mut act = x.clone();
        for l in &mut self.layers[..depth] {
            let (next, cache) = match &mut l.layer {
                Layer::Conv2d(c) => (conv2d_forward(&act, c)?, Cache::Input(act)),
                Layer::BatchNorm(b) => {
                    let (y, cache) = batchnorm_forward_train(&act, b)?;
                    (y, Cache::Bn(cache))
                }
                Layer::Relu => (relu_forward(&act), Cache::Input(act)),
                Layer::MaxPool2d { window, stride } => {
                    let p = maxpool2d_forward(&act, *window, *stride)?;
                    (
                        p.output,
                        Cache::Pool {
                            input_shape: act.shape().to_vec(),
                            argmax: p.argmax,
                        },
                    )
                }
                Layer::Dense(d) => (dense_forward(&act, d)?, Cache::Input(act)),
                Layer::SoftmaxOutput => unreachable!("softmax is handled by the loss"),
            };
            caches.push(cache);
            act = next;
        }
        Ok((act, Trace { caches }))
    }

    pub fn backward(&self, trace: &Trace<T>, dlogits: &Tensor<T>) -> Result<NetworkGrads<T>> {
        let depth = self.logit_depth();
        if trace.caches.len() != depth {
            return Err(invalid("trace does not belong to this network"));
        }
        let mut grad = dlogits.clone();
        let mut per_layer: Vec<Vec<Tensor<T>>> = vec![Vec::new(); depth];
        for i in (0..depth).rev() {
            let layer = &self.layers[i].layer;
            grad = match (layer, &trace.caches[i]) {
                (Layer::Conv2d(c), Cache::Input(x)) => {
                    let r = conv2d_backward(x, c, &grad)?;
                    per_layer[i] = r.params;
                    r.input
                }
                (Layer::BatchNorm(b), Cache::Bn(cache)) => {
                    let r = batchnorm_backward(cache, b, &grad)?;
                    per_layer[i] = r.params;
                    r.input
                }
                (Layer::Relu, Cache::Input(x)) => relu_backward(x, &grad)?,
                (Layer::MaxPool2d { .. }, Cache::Pool { input_shape, argmax }) => {
                    maxpool2d_backward(input_shape, argmax, &grad)?
                }
                (Layer::Dense(d), Cache::Input(x)) => {
                    let r = dense_backward(x, d, &grad)?;
                    per_layer[i] = r.params;
                    r.input
                }
                _ => return Err(invalid("trace does not belong to this network")),
            };
        }
        Ok(NetworkGrads {
            params: per_layer.into_iter().flatten().collect(),
            input: grad,
        })
    }

    /// Train-mode forward, softmax cross-entropy and backward in one call.
    pub fn loss_and_grads(&mut self, x: &Tensor<T>, labels: &[usize]) -> Result<(T, NetworkGrads<T>)> {
        let (logits, trace) = self.forward_train(x)?;
        let out = softmax_crossentropy(&logits, labels)?;
        let grads = self.backward(&trace, &out.grad)?;
        Ok((out.loss, grads))
    }

    /// Name of the first layer whose train-mode output is not finite.
    pub fn first_non_finite_layer(&self, x: &Tensor<T>) -> Option<String> {
        let mut probe = self.clone();
        let mut act = x.clone();
        for l in &mut probe.layers {
            act = match &mut l.layer {
                Layer::BatchNorm(b) => match batchnorm_forward_train(&act, b) {
                    Ok((y, _)) => y,
                    Err(_) => return Some(l.name.clone()),
                },
                other => match Self::layer_forward_infer(other, &act) {
                    Ok(y) => y,
                    Err(_) => return Some(l.name.clone()),
                },
            };
            if !act.all_finite() {
                return Some(l.name.clone());
            }
        }
        None
    }
}
