use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

const PROB_FLOOR: f64 = 1e-12;

/// Mean negative log-likelihood of `labels` under row-wise probabilities.
///
/// The returned gradient is with respect to the logits feeding the softmax
/// that produced `probs`: `(p - onehot) / batch`.
pub fn cross_entropy_loss<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    let shape = probs.shape();
    if shape.len() != 2 {
        return Err(Error::ShapeMismatch {
            layer: 0,
            kind: "cross_entropy",
            expected: alloc::vec![labels.len(), shape.last().copied().unwrap_or(0)],
            found: shape.to_vec(),
        });
    }
    let (batch, n) = (shape[0], shape[1]);
    if labels.len() != batch {
        return Err(Error::LengthMismatch {
            what: "labels vs probability rows",
            left: labels.len(),
            right: batch,
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= n) {
        return Err(Error::LabelOutOfRange { label, n_classes: n });
    }
    let inv_batch = T::from_f64(1.0 / batch as f64);
    let mut loss = 0.0;
    let mut grad: Vec<T> = probs.data().iter().map(|&p| p * inv_batch).collect();
    for (i, &label) in labels.iter().enumerate() {
        let p = probs.data()[i * n + label].as_f64();
        loss -= p.max(PROB_FLOOR).ln();
        let g = &mut grad[i * n + label];
        *g = *g - inv_batch;
    }
    Ok((loss / batch as f64, Tensor::new(shape.to_vec(), grad)?))
}

/// Row-wise softmax of a `[N, K]` tensor.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let n = *logits.shape().last().unwrap_or(&1);
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(n) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}
