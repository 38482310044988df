use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Added inside the log of [`qce`] so zero probabilities stay finite.
pub const QCE_EPSILON: f64 = 1e-12;

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() || a.is_empty() {
        return Err(invalid(format!(
            "output tensors must be non-empty with equal shapes, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean squared difference between reference and quantized outputs.
pub fn qmse<T: Scalar>(reference: &Tensor<T>, quantized: &Tensor<T>) -> Result<f64> {
    same_shape(reference, quantized)?;
    let sum: f64 = reference
        .data()
        .iter()
        .zip(quantized.data())
        .map(|(&a, &b)| (a.to_f64_lossy() - b.to_f64_lossy()).powi(2))
        .sum();
    Ok(sum / reference.len() as f64)
}

/// Cross-entropy of the quantized distribution against the reference one,
/// `-sum_c p[c] ln(q[c] + eps)`, averaged over samples.
pub fn qce<T: Scalar>(reference: &Tensor<T>, quantized: &Tensor<T>) -> Result<f64> {
    same_shape(reference, quantized)?;
    let n = reference.batch();
    let k = reference.sample_len();
    let total: f64 = reference
        .data()
        .chunks(k)
        .zip(quantized.data().chunks(k))
        .map(|(p, q)| {
            -p.iter()
                .zip(q)
                .map(|(&p, &q)| p.to_f64_lossy() * (q.to_f64_lossy() + QCE_EPSILON).ln())
                .sum::<f64>()
        })
        .sum();
    Ok(total / n as f64)
}

/// `(acc_ref - acc_q) / acc_ref`.
pub fn relative_degradation(acc_ref: f64, acc_q: f64) -> Result<f64> {
    if !(acc_ref > 0.0) {
        return Err(invalid(format!(
            "relative degradation needs a positive reference accuracy, got {acc_ref}"
        )));
    }
    Ok((acc_ref - acc_q) / acc_ref)
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy<T: Scalar>(scores: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    if scores.batch() != labels.len() || labels.is_empty() {
        return Err(invalid(format!(
            "{} score rows for {} labels",
            scores.batch(),
            labels.len()
        )));
    }
    let hits = scores
        .argmax_rows()
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}
