use rayon::prelude::*;

use super::GradientRecord;
use crate::error::{config, invalid, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalise with batch statistics and update the running averages.
    Train,
    /// Normalise with the running averages.
    Infer,
}

/// Per-channel batch normalisation over `(N, H, W)`; rank-2 inputs are treated
/// as `H = W = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub epsilon: T,
    /// Weight of the previous running value in the moving-average update.
    pub momentum: T,
}

/// Values saved by a train-mode forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub x_hat: Tensor<T>,
    pub inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            epsilon: T::lit(DEFAULT_EPSILON),
            momentum: T::lit(DEFAULT_MOMENTUM),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        for (name, t) in [
            ("beta", &self.beta),
            ("running_mean", &self.running_mean),
            ("running_var", &self.running_var),
        ] {
            if t.shape() != [c] {
                return Err(config(format!("batchnorm {name} must have {c} entries")));
            }
        }
        if !(self.epsilon > T::zero()) {
            return Err(config("batchnorm epsilon must be positive"));
        }
        if self.running_var.data().iter().any(|&v| !(v >= T::zero())) {
            return Err(invalid("batchnorm running variance must be non-negative"));
        }
        Ok(())
    }

    /// Per-channel `(scale, shift)` such that inference is `scale * x + shift`.
    pub fn inference_affine(&self) -> (Vec<T>, Vec<T>) {
        let scale: Vec<T> = self
            .gamma
            .data()
            .iter()
            .zip(self.running_var.data())
            .map(|(&g, &v)| g / (v + self.epsilon).sqrt())
            .collect();
        let shift = self
            .beta
            .data()
            .iter()
            .zip(self.running_mean.data())
            .zip(&scale)
            .map(|((&b, &m), &s)| b - m * s)
            .collect();
        (scale, shift)
    }
}

fn dims<T: Scalar>(x: &Tensor<T>, bn: &BatchNorm<T>) -> Result<(usize, usize, usize)> {
    let [n, c, h, w] = x.nchw()?;
    if c != bn.channels() {
        return Err(invalid(format!(
            "batchnorm has {} channels, input has {c}",
            bn.channels()
        )));
    }
    Ok((n, c, h * w))
}

/// Forward pass. In [`BnMode::Train`] the running statistics are updated.
pub fn batchnorm_forward<T: Scalar>(x: &Tensor<T>, bn: &mut BatchNorm<T>, mode: BnMode) -> Result<Tensor<T>> {
    match mode {
        BnMode::Train => batchnorm_forward_train(x, bn).map(|(y, _)| y),
        BnMode::Infer => batchnorm_forward_infer(x, bn),
    }
}

pub fn batchnorm_forward_infer<T: Scalar>(x: &Tensor<T>, bn: &BatchNorm<T>) -> Result<Tensor<T>> {
    bn.validate()?;
    let (_, c, plane) = dims(x, bn)?;
    let (scale, shift) = bn.inference_affine();
    let mut y = x.clone();
    y.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, dst)| {
            let ch = idx % c;
            dst.iter_mut().for_each(|v| *v = *v * scale[ch] + shift[ch]);
        });
    Ok(y)
}

pub fn batchnorm_forward_train<T: Scalar>(x: &Tensor<T>, bn: &mut BatchNorm<T>) -> Result<(Tensor<T>, BnCache<T>)> {
    bn.validate()?;
    let (n, c, plane) = dims(x, bn)?;
    let count = T::lit((n * plane) as f64);
    let xd = x.data();

    let stats: Vec<(T, T)> = (0..c)
        .into_par_iter()
        .map(|ch| {
            let mut sum = T::zero();
            for s in 0..n {
                sum += xd[(s * c + ch) * plane..][..plane].iter().copied().sum::<T>();
            }
            let mean = sum / count;
            let mut sq = T::zero();
            for s in 0..n {
                sq += xd[(s * c + ch) * plane..][..plane]
                    .iter()
                    .map(|&v| (v - mean) * (v - mean))
                    .sum::<T>();
            }
            (mean, sq / count)
        })
        .collect();

    let inv_std: Vec<T> = stats
        .iter()
        .map(|&(_, var)| T::one() / (var + bn.epsilon).sqrt())
        .collect();
    let mut x_hat = x.clone();
    let mut y = x.clone();
    let (gamma, beta) = (bn.gamma.data(), bn.beta.data());
    x_hat
        .data_mut()
        .par_chunks_mut(plane)
        .zip(y.data_mut().par_chunks_mut(plane))
        .enumerate()
        .for_each(|(idx, (xh, yy))| {
            let ch = idx % c;
            let (mean, _) = stats[ch];
            for (a, b) in xh.iter_mut().zip(yy.iter_mut()) {
                *a = (*a - mean) * inv_std[ch];
                *b = gamma[ch] * *a + beta[ch];
            }
        });

    let m = bn.momentum;
    let one = T::one();
    for (ch, &(mean, var)) in stats.iter().enumerate() {
        let rm = &mut bn.running_mean.data_mut()[ch];
        *rm = m * *rm + (one - m) * mean;
        let rv = &mut bn.running_var.data_mut()[ch];
        *rv = m * *rv + (one - m) * var;
    }
    Ok((y, BnCache { x_hat, inv_std }))
}

/// Backward pass through a train-mode forward. Gradients are `[gamma, beta]`.
pub fn batchnorm_backward<T: Scalar>(cache: &BnCache<T>, bn: &BatchNorm<T>, upstream: &Tensor<T>) -> Result<GradientRecord<T>> {
    upstream.expect_shape(cache.x_hat.shape())?;
    let (n, c, plane) = dims(upstream, bn)?;
    let count = T::lit((n * plane) as f64);
    let (xh, dy) = (cache.x_hat.data(), upstream.data());

    let sums: Vec<(T, T)> = (0..c)
        .into_par_iter()
        .map(|ch| {
            let (mut sdy, mut sdyx) = (T::zero(), T::zero());
            for s in 0..n {
                let off = (s * c + ch) * plane;
                for i in off..off + plane {
                    sdy += dy[i];
                    sdyx += dy[i] * xh[i];
                }
            }
            (sdyx, sdy)
        })
        .collect();

    let gamma = bn.gamma.data();
    let mut dx = Tensor::zeros(upstream.shape());
    dx.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, dst)| {
            let ch = idx % c;
            let (sdyx, sdy) = sums[ch];
            let k = gamma[ch] * cache.inv_std[ch] / count;
            let off = idx * plane;
            for (i, d) in dst.iter_mut().enumerate() {
                *d = k * (count * dy[off + i] - sdy - xh[off + i] * sdyx);
            }
        });

    let dgamma = Tensor::new(&[c], sums.iter().map(|s| s.0).collect())?;
    let dbeta = Tensor::new(&[c], sums.iter().map(|s| s.1).collect())?;
    Ok(GradientRecord {
        params: vec![dgamma, dbeta],
        input: dx,
    })
}
