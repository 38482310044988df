use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Row-wise softmax of `[N, K]` logits, stabilised by subtracting the row max.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.rank() != 2 {
        return Err(invalid(format!("softmax expects [N, K], got {:?}", logits.shape())));
    }
    let k = logits.shape()[1];
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SoftmaxLoss<T> {
    /// Mean negative log-likelihood over the batch.
    pub loss: T,
    pub probs: Tensor<T>,
    /// Gradient of `loss` with respect to the logits.
    pub grad: Tensor<T>,
}

pub fn softmax_crossentropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<SoftmaxLoss<T>> {
    let probs = softmax(logits)?;
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != n {
        return Err(invalid(format!("{} labels for a batch of {n}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(invalid(format!("label {bad} out of range for {k} classes")));
    }
    let nf = T::lit(n as f64);
    let mut loss = T::zero();
    let mut grad = probs.clone();
    for (s, &label) in labels.iter().enumerate() {
        let p = probs.data()[s * k + label];
        loss -= p.max(T::min_positive_value()).ln();
        grad.data_mut()[s * k + label] -= T::one();
    }
    grad.data_mut().iter_mut().for_each(|g| *g /= nf);
    Ok(SoftmaxLoss {
        loss: loss / nf,
        probs,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Tensor::<f64>::full(&[3, 10], 0.7);
        let out = softmax_crossentropy(&logits, &[0, 4, 9]).unwrap();
        assert!(out.probs.data().iter().all(|&p| (p - 0.1).abs() < 1e-12));
        assert!((out.loss - 10f64.ln()).abs() < 1e-12);
        assert!((out.loss - 2.302585).abs() < 1e-6);
    }

    #[test]
    fn large_logits_stay_finite() {
        let logits = Tensor::<f32>::new(&[1, 3], vec![1000.0, 0.0, -1000.0]).unwrap();
        let out = softmax_crossentropy(&logits, &[2]).unwrap();
        assert!(out.loss.is_finite());
        assert!(out.probs.all_finite());
    }

    #[test]
    fn rejects_out_of_range_label() {
        let logits = Tensor::<f32>::zeros(&[1, 3]);
        assert!(matches!(
            softmax_crossentropy(&logits, &[3]),
            Err(crate::Error::InvalidInput(_))
        ));
    }
}
