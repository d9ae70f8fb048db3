use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mean softmax cross-entropy over the batch and its gradient
/// `(softmax - onehot) / B` with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let (b, c) = (logits.rows(), logits.cols());
    if logits.shape().len() != 2 || labels.len() != b {
        return Err(Error::Shape(format!(
            "logits {:?} vs {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidParameter(format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    let inv_b = T::one() / T::lit(b as f64);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); b * c];
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let top = super::argmax(row);
        let max = row[top];
        // The arg-max term is exactly 1; ln_1p keeps tiny tails accurate.
        let rest: T = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != top)
            .map(|(_, &z)| (z - max).exp())
            .sum();
        let log_sum = rest.ln_1p();
        loss = loss + (log_sum - (row[label] - max));
        for (j, g) in grad[r * c..(r + 1) * c].iter_mut().enumerate() {
            let p = (row[j] - max - log_sum).exp();
            let target = if j == label { T::one() } else { T::zero() };
            *g = (p - target) * inv_b;
        }
    }
    Ok((loss * inv_b, Tensor::new(vec![b, c], grad)?))
}

/// Fraction of rows whose arg-max equals the label.
pub fn accuracy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(r, &l)| argmax(logits.row(r)) == l)
        .count();
    hits as f64 / labels.len() as f64
}

pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}
