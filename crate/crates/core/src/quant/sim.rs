//! Simulated integer inference.
//!
//! Weights are batchnorm-folded and fake-quantized per tensor, biases are
//! rounded onto the int32 grid `s_in * s_w`, and every unit output is
//! fake-quantized with its calibrated range. Arithmetic stays in floating
//! point, so results match an integer kernel up to accumulation order.

use serde::{Deserialize, Serialize};

use super::affine::{fake_quantize, QuantParams};
use super::calibrate::{quant_units, CalibrationRecord, QuantUnit, UnitKind};
use crate::error::{config, Result};
use crate::nn::{conv2d_forward, dense_forward, maxpool2d_forward, relu_forward, softmax, Conv2d, Dense, Layer, Network};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantSimOptions {
    /// Bit width of weights and activations; 8 for quint8.
    pub bits: u32,
    /// Quantize dense layers as well as convolutions.
    pub quantize_dense: bool,
}

impl Default for QuantSimOptions {
    fn default() -> Self {
        Self {
            bits: 8,
            quantize_dense: true,
        }
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Conv {
        conv: Conv2d<T>,
        relu: bool,
        out: Option<QuantParams>,
    },
    Dense {
        dense: Dense<T>,
        relu: bool,
        out: Option<QuantParams>,
    },
    Relu,
    Pool {
        window: usize,
        stride: usize,
    },
}

#[derive(Debug, Clone)]
pub struct QuantizedModel<T> {
    input: QuantParams,
    ops: Vec<Op<T>>,
    pub options: QuantSimOptions,
}

fn round_bias<T: Scalar>(b: &Tensor<T>, scale: f64) -> Tensor<T> {
    if !(scale > 0.0) {
        return b.clone();
    }
    let lim = i32::MAX as f64;
    b.map(|v| T::lit((v.to_f64_lossy() / scale).round().clamp(-lim - 1.0, lim) * scale))
}

impl<T: Scalar> QuantizedModel<T> {
    pub fn build(net: &Network<T>, record: &CalibrationRecord, options: QuantSimOptions) -> Result<Self> {
        let input = QuantParams::from_range(record.input, options.bits)?;
        let units = quant_units(net);
        let mut by_start: Vec<Option<&QuantUnit<'_, T>>> = vec![None; net.layers.len()];
        for u in &units {
            by_start[u.start] = Some(u);
        }
        let mut ops = Vec::new();
        let mut in_qp = Some(input);
        let mut i = 0;
        while i < net.layers.len() {
            if let Some(u) = by_start[i] {
                let entry = record.get(u.name)?;
                if entry.kind != u.kind() {
                    return Err(config(format!("calibration entry for `{}` has the wrong kind", u.name)));
                }
                if u.bn.is_some() && entry.bn_fold.is_none() {
                    return Err(config(format!("calibration entry for `{}` lacks the folded weight range", u.name)));
                }
                let (mut w, mut b) = u.folded()?;
                let quantize = u.kind() == UnitKind::Conv || options.quantize_dense;
                let out = if quantize {
                    let wq = QuantParams::from_range(entry.encode_weight_range(), options.bits)?;
                    w = fake_quantize(&w, &wq);
                    if let Some(q) = in_qp {
                        b = round_bias(&b, q.scale * wq.scale);
                    }
                    Some(QuantParams::from_range(entry.activation, options.bits)?)
                } else {
                    None
                };
                ops.push(match u.op {
                    super::calibrate::UnitOp::Conv(c) => Op::Conv {
                        conv: Conv2d::new(w, b, c.groups, c.stride, c.padding)?,
                        relu: u.relu,
                        out,
                    },
                    super::calibrate::UnitOp::Dense(_) => Op::Dense {
                        dense: Dense { weight: w, bias: b },
                        relu: u.relu,
                        out,
                    },
                });
                in_qp = out;
                i = u.site + 1;
                continue;
            }
            let l = &net.layers[i];
            match &l.layer {
                Layer::Relu => ops.push(Op::Relu),
                Layer::MaxPool2d { window, stride } => ops.push(Op::Pool {
                    window: *window,
                    stride: *stride,
                }),
                Layer::SoftmaxOutput => {}
                _ => {
                    return Err(config(format!(
                        "layer `{}` ({}) cannot be simulated on its own",
                        l.name,
                        l.layer.kind_name()
                    )))
                }
            }
            i += 1;
        }
        Ok(Self { input, ops, options })
    }

    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut act = fake_quantize(x, &self.input);
        for op in &self.ops {
            act = match op {
                Op::Conv { conv, relu, out } => finish(conv2d_forward(&act, conv)?, *relu, out),
                Op::Dense { dense, relu, out } => finish(dense_forward(&act, dense)?, *relu, out),
                Op::Relu => relu_forward(&act),
                Op::Pool { window, stride } => maxpool2d_forward(&act, *window, *stride)?.output,
            };
        }
        Ok(act)
    }

    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        softmax(&self.logits(x)?)
    }
}

fn finish<T: Scalar>(y: Tensor<T>, relu: bool, out: &Option<QuantParams>) -> Tensor<T> {
    let y = if relu { relu_forward(&y) } else { y };
    match out {
        Some(q) => fake_quantize(&y, q),
        None => y,
    }
}

/// Class probabilities of the simulated quantized network.
pub fn quantized_inference<T: Scalar>(
    net: &Network<T>,
    record: &CalibrationRecord,
    inputs: &Tensor<T>,
    options: QuantSimOptions,
) -> Result<Tensor<T>> {
    QuantizedModel::build(net, record, options)?.predict(inputs)
}
