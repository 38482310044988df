use rayon::prelude::*;

use super::GradientRecord;
use crate::error::{config, invalid, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Fully connected layer `y = x W^T + b`; inputs are flattened per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// `[fan_out, fan_in]`
    pub weight: Tensor<T>,
    /// `[fan_out]`
    pub bias: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[fan_out, fan_in]),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[0]
    }

    fn check(&self, x: &Tensor<T>) -> Result<usize> {
        if self.weight.rank() != 2 || self.bias.shape() != [self.fan_out()] {
            return Err(config("dense weight must be [fan_out, fan_in] with a [fan_out] bias"));
        }
        if x.rank() < 2 || x.sample_len() != self.fan_in() {
            return Err(invalid(format!(
                "dense layer expects {} features per sample, input shape is {:?}",
                self.fan_in(),
                x.shape()
            )));
        }
        Ok(x.batch())
    }
}

pub fn dense_forward<T: Scalar>(x: &Tensor<T>, p: &Dense<T>) -> Result<Tensor<T>> {
    let n = p.check(x)?;
    let (fi, fo) = (p.fan_in(), p.fan_out());
    let (xd, wd, bd) = (x.data(), p.weight.data(), p.bias.data());
    let mut y = Tensor::zeros(&[n, fo]);
    y.data_mut()
        .par_chunks_mut(fo)
        .enumerate()
        .for_each(|(s, row)| {
            let xs = &xd[s * fi..][..fi];
            for (j, out) in row.iter_mut().enumerate() {
                let wr = &wd[j * fi..][..fi];
                *out = bd[j] + xs.iter().zip(wr).map(|(&a, &b)| a * b).sum::<T>();
            }
        });
    Ok(y)
}

/// Gradients are `[weight, bias]`; the input gradient has the input's shape.
pub fn dense_backward<T: Scalar>(x: &Tensor<T>, p: &Dense<T>, upstream: &Tensor<T>) -> Result<GradientRecord<T>> {
    let n = p.check(x)?;
    let (fi, fo) = (p.fan_in(), p.fan_out());
    upstream.expect_shape(&[n, fo])?;
    let (xd, wd, dyd) = (x.data(), p.weight.data(), upstream.data());

    let mut dw = Tensor::zeros(&[fo, fi]);
    dw.data_mut()
        .par_chunks_mut(fi)
        .enumerate()
        .for_each(|(j, row)| {
            for s in 0..n {
                let g = dyd[s * fo + j];
                for (d, &xv) in row.iter_mut().zip(&xd[s * fi..][..fi]) {
                    *d += g * xv;
                }
            }
        });
    let db = Tensor::new(
        &[fo],
        (0..fo).map(|j| (0..n).map(|s| dyd[s * fo + j]).sum()).collect(),
    )?;
    let mut dx = Tensor::zeros(x.shape());
    dx.data_mut()
        .par_chunks_mut(fi)
        .enumerate()
        .for_each(|(s, row)| {
            for j in 0..fo {
                let g = dyd[s * fo + j];
                for (d, &wv) in row.iter_mut().zip(&wd[j * fi..][..fi]) {
                    *d += g * wv;
                }
            }
        });
    Ok(GradientRecord {
        params: vec![dw, db],
        input: dx,
    })
}
