//! Batchnorm folding into the preceding convolution.

use crate::error::{invalid, Result};
use crate::nn::{BatchNorm, Conv2d};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Folds inference batchnorm into weights `w` (output channel on axis 0) and
/// bias `b`:
///
/// `w'[o] = w[o] * gamma[o] / sqrt(var[o] + eps)`,
/// `b'[o] = beta[o] + (b[o] - mean[o]) * gamma[o] / sqrt(var[o] + eps)`.
#[allow(clippy::too_many_arguments)]
pub fn fold_batchnorm<T: Scalar>(
    w: &Tensor<T>,
    b: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    mean: &Tensor<T>,
    var: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let c = w.shape()[0];
    for (name, t) in [("bias", b), ("gamma", gamma), ("beta", beta), ("mean", mean), ("variance", var)] {
        if t.shape() != [c] {
            return Err(invalid(format!(
                "batchnorm fold: {name} has shape {:?}, expected [{c}]",
                t.shape()
            )));
        }
    }
    if let Some(v) = var.data().iter().find(|&&v| !(v >= T::zero())) {
        return Err(invalid(format!("batchnorm fold: negative variance {v}")));
    }
    let scale: Vec<T> = gamma
        .data()
        .iter()
        .zip(var.data())
        .map(|(&g, &v)| g / (v + eps).sqrt())
        .collect();
    let per = w.len() / c;
    let mut wf = w.clone();
    for (o, chunk) in wf.data_mut().chunks_mut(per).enumerate() {
        chunk.iter_mut().for_each(|v| *v *= scale[o]);
    }
    let bf = Tensor::new(
        &[c],
        (0..c)
            .map(|o| beta.data()[o] + (b.data()[o] - mean.data()[o]) * scale[o])
            .collect(),
    )?;
    Ok((wf, bf))
}

/// Convolution equivalent to `conv` followed by `bn` in inference mode.
pub fn fold_conv_bn<T: Scalar>(conv: &Conv2d<T>, bn: &BatchNorm<T>) -> Result<Conv2d<T>> {
    let (weight, bias) = fold_batchnorm(
        &conv.weight,
        &conv.bias,
        &bn.gamma,
        &bn.beta,
        &bn.running_mean,
        &bn.running_var,
        bn.epsilon,
    )?;
    Conv2d::new(weight, bias, conv.groups, conv.stride, conv.padding)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ch(v: &[f64]) -> Tensor<f64> {
        Tensor::new(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn identity_batchnorm_leaves_parameters() {
        let w = Tensor::from_fn(&[2, 1, 3, 3], |i| i as f64 * 0.1 - 0.5);
        let b = ch(&[0.3, -0.2]);
        let (wf, bf) = fold_batchnorm(&w, &b, &ch(&[1.0, 1.0]), &ch(&[0.0, 0.0]), &ch(&[0.0, 0.0]), &ch(&[1.0, 1.0]), 1e-12).unwrap();
        assert!(wf.max_abs_diff(&w).unwrap() < 1e-9);
        assert!(bf.max_abs_diff(&b).unwrap() < 1e-9);
    }

    #[test]
    fn multiplier_is_gamma_over_root_var_plus_eps() {
        let w = Tensor::full(&[1, 1, 1, 1], 1.0);
        let (wf, bf) = fold_batchnorm(&w, &ch(&[0.5]), &ch(&[2.0]), &ch(&[0.1]), &ch(&[0.25]), &ch(&[3.0]), 1e-3).unwrap();
        let m = 2.0 / 3.001f64.sqrt();
        assert!((wf.data()[0] - m).abs() < 1e-15);
        assert!((bf.data()[0] - (0.1 + 0.25 * m)).abs() < 1e-15);
    }

    #[test]
    fn negative_variance_is_rejected() {
        let w = Tensor::full(&[1, 1, 1, 1], 1.0);
        let r = fold_batchnorm(&w, &ch(&[0.0]), &ch(&[1.0]), &ch(&[0.0]), &ch(&[0.0]), &ch(&[-1.0]), 1e-3);
        assert!(matches!(r, Err(crate::Error::InvalidInput(_))));
    }
}
