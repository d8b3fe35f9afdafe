use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Squared Euclidean distance between prediction and target, summed over
/// all head outputs, plus its gradient `2 * (pred - target)`.
pub fn l2_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            got: pred.len(),
        });
    }
    let mut loss = 0.0f64;
    let mut grad = vec![0.0f64; pred.len()];
    for (i, (p, t)) in pred.data().iter().zip(target.data()).enumerate() {
        let d = p - t;
        loss += d * d;
        grad[i] = 2.0 * d;
    }
    Ok((loss, Tensor::flat(grad)))
}
