//! Parameter-free layers: ReLU and max pooling.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

/// Gradient of ReLU given its forward input; the derivative at 0 is taken as 0.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    upstream.expect_shape(x.shape())?;
    let data = x
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&xv, &g)| if xv > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(x.shape(), data)
}

/// Max-pool output together with the flat input index chosen for every output.
#[derive(Debug, Clone)]
pub struct PoolOutput<T> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
}

pub fn maxpool2d_forward<T: Scalar>(x: &Tensor<T>, window: usize, stride: usize) -> Result<PoolOutput<T>> {
    let &[n, c, h, w] = x.shape() else {
        return Err(invalid(format!("max-pool input must be [N, C, H, W], got {:?}", x.shape())));
    };
    if window == 0 || stride == 0 || window > h || window > w {
        return Err(invalid(format!(
            "pool window {window} / stride {stride} does not fit {h}x{w}"
        )));
    }
    let (oh, ow) = ((h - window) / stride + 1, (w - window) / stride + 1);
    let mut output = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0usize; n * c * oh * ow];
    let xd = x.data();
    output
        .data_mut()
        .par_chunks_mut(oh * ow)
        .zip(argmax.par_chunks_mut(oh * ow))
        .enumerate()
        .for_each(|(plane, (dst, arg))| {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * stride * w + ox * stride;
                    for dy in 0..window {
                        for dx in 0..window {
                            let i = base + (oy * stride + dy) * w + ox * stride + dx;
                            if xd[i] > xd[best] {
                                best = i;
                            }
                        }
                    }
                    dst[oy * ow + ox] = xd[best];
                    arg[oy * ow + ox] = best;
                }
            }
        });
    Ok(PoolOutput { output, argmax })
}

pub fn maxpool2d_backward<T: Scalar>(input_shape: &[usize], argmax: &[usize], upstream: &Tensor<T>) -> Result<Tensor<T>> {
    if upstream.len() != argmax.len() {
        return Err(invalid("max-pool upstream gradient does not match the forward output"));
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(upstream.data()) {
        d[i] += g;
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        let x = Tensor::<f32>::new(&[1, 2], vec![-1.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 2.0]);
    }

    #[test]
    fn maxpool_picks_window_maximum() {
        let x = Tensor::<f32>::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = maxpool2d_forward(&x, 2, 2).unwrap();
        assert_eq!(p.output.data(), &[4.0]);
        assert_eq!(p.argmax, vec![3]);
        let g = maxpool2d_backward(x.shape(), &p.argmax, &Tensor::full(&[1, 1, 1, 1], 2.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn maxpool_floors_odd_sizes() {
        let x = Tensor::<f32>::from_fn(&[2, 3, 5, 5], |i| i as f32);
        let p = maxpool2d_forward(&x, 2, 2).unwrap();
        assert_eq!(p.output.shape(), &[2, 3, 2, 2]);
        assert!(maxpool2d_forward(&Tensor::<f32>::zeros(&[1, 1, 1, 1]), 2, 2).is_err());
    }
}
