use serde::{Deserialize, Serialize};

use super::range::ValueRange;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Asymmetric affine parameters: `x ~ scale * (q - zero_point)` with
/// `q in [0, 2^bits - 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scale: f64,
    pub zero_point: u32,
    pub bits: u32,
}

impl QuantParams {
    /// Parameters covering `range`. The range is first widened to contain zero
    /// and the zero point is rounded to an integer, so the representable range
    /// shifts by at most half a step and zero is exact.
    pub fn from_range(range: ValueRange, bits: u32) -> Result<Self> {
        if !(2..=16).contains(&bits) {
            return Err(invalid(format!("bit width must be in 2..=16, got {bits}")));
        }
        if !(range.min <= range.max) || !range.min.is_finite() || !range.max.is_finite() {
            return Err(invalid(format!(
                "cannot quantize over the range [{}, {}]",
                range.min, range.max
            )));
        }
        let qmax = ((1u32 << bits) - 1) as f64;
        let lo = range.min.min(0.0);
        let hi = range.max.max(0.0);
        if hi == lo {
            return Ok(Self {
                scale: 1.0,
                zero_point: 0,
                bits,
            });
        }
        let scale = (hi - lo) / qmax;
        let zero_point = (-lo / scale).round().clamp(0.0, qmax) as u32;
        Ok(Self {
            scale,
            zero_point,
            bits,
        })
    }

    pub fn qmax(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    /// Range actually representable after zero-point rounding.
    pub fn nudged_range(&self) -> ValueRange {
        ValueRange {
            min: -(self.zero_point as f64) * self.scale,
            max: (self.qmax() as f64 - self.zero_point as f64) * self.scale,
        }
    }

    pub fn quantize_value(&self, x: f64) -> u32 {
        let q = (x / self.scale).round() + self.zero_point as f64;
        q.clamp(0.0, self.qmax() as f64) as u32
    }

    pub fn dequantize_value(&self, q: u32) -> f64 {
        self.scale * (q as f64 - self.zero_point as f64)
    }

    /// Quantize then dequantize.
    pub fn fake_value(&self, x: f64) -> f64 {
        self.dequantize_value(self.quantize_value(x))
    }
}

/// 8-bit payload with the parameters needed to decode it.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub shape: Vec<usize>,
    pub payload: Vec<u8>,
    pub params: QuantParams,
}

/// Quantize to quint8 over `range`.
pub fn quantize_affine<T: Scalar>(t: &Tensor<T>, range: ValueRange) -> Result<QuantizedTensor> {
    let params = QuantParams::from_range(range, 8)?;
    let payload = t
        .data()
        .iter()
        .map(|&x| params.quantize_value(x.to_f64_lossy()) as u8)
        .collect();
    Ok(QuantizedTensor {
        shape: t.shape().to_vec(),
        payload,
        params,
    })
}

pub fn dequantize<T: Scalar>(q: &QuantizedTensor) -> Result<Tensor<T>> {
    Tensor::new(
        &q.shape,
        q.payload
            .iter()
            .map(|&v| T::lit(q.params.dequantize_value(v as u32)))
            .collect(),
    )
}

/// Quantize-dequantize every element with `params`.
pub fn fake_quantize<T: Scalar>(t: &Tensor<T>, params: &QuantParams) -> Tensor<T> {
    t.map(|x| T::lit(params.fake_value(x.to_f64_lossy())))
}
