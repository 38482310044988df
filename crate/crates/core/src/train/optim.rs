use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Classical momentum without dampening or weight decay:
/// `v <- momentum * v + g`, `p <- p - lr * v`.
pub fn sgd_momentum_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
    velocity: &mut [Tensor<T>],
    lr: T,
    momentum: T,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(invalid(format!(
            "{} parameters, {} gradients and {} velocities",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    for ((p, g), v) in params.iter().zip(grads).zip(velocity.iter()) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(invalid(format!(
                "parameter shape {:?} does not match gradient {:?} / velocity {:?}",
                p.shape(),
                g.shape(),
                v.shape()
            )));
        }
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = momentum * *vv + gv;
            *pv -= lr * *vv;
        }
    }
    Ok(())
}

/// Zero velocities shaped like `params`.
pub fn zero_velocity<T: Scalar>(params: &[&Tensor<T>]) -> Vec<Tensor<T>> {
    params.iter().map(|p| Tensor::zeros(p.shape())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::new(&[1], vec![v]).unwrap()
    }

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut p = scalar(1.0);
        let mut v = vec![scalar(0.0)];
        sgd_momentum_step(&mut [&mut p], &[scalar(0.5)], &mut v, 0.1, 0.0).unwrap();
        assert_eq!(p.data()[0], 0.95);
    }

    #[test]
    fn quadratic_recurrence() {
        // f(p) = p^2 / 2, so g = p.
        let (lr, m) = (0.1, 0.9);
        let mut p = scalar(1.0);
        let mut v = vec![scalar(0.0)];
        let (mut po, mut vo) = (1.0f64, 0.0f64);
        for _ in 0..3 {
            let g = scalar(p.data()[0]);
            sgd_momentum_step(&mut [&mut p], &[g], &mut v, lr, m).unwrap();
            vo = m * vo + po;
            po -= lr * vo;
        }
        assert!((p.data()[0] - po).abs() < 1e-15);
        // By hand: p = 0.9, 0.72, 0.486.
        assert!((po - 0.486).abs() < 1e-12);
    }

    #[test]
    fn coasting_on_velocity_is_geometric() {
        let mut p = scalar(0.0);
        let mut v = vec![scalar(1.0)];
        for _ in 0..200 {
            sgd_momentum_step(&mut [&mut p], &[scalar(0.0)], &mut v, 1.0, 0.5).unwrap();
        }
        // -(0.5 + 0.25 + ...) -> -1
        assert!((p.data()[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = scalar(0.0);
        let mut v = vec![scalar(0.0)];
        let g = Tensor::<f64>::zeros(&[2]);
        assert!(sgd_momentum_step(&mut [&mut p], &[g], &mut v, 0.1, 0.9).is_err());
    }
}
