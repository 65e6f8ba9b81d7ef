//! Training losses: categorical cross-entropy and mean absolute error.

use super::{Tensor, TensorError};

/// Floor applied to predicted probabilities before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Categorical cross-entropy `-ln(pred[label])` over a probability vector.
///
/// The prediction must already sum to 1 within 1e-4 (i.e. be a softmax
/// output); the selected probability is floored at `1e-12`.
pub fn cross_entropy(pred: &Tensor, label: usize) -> Result<f64, TensorError> {
    if pred.is_empty() {
        return Err(TensorError::Empty("cross_entropy"));
    }
    if label >= pred.len() {
        return Err(TensorError::LabelOutOfRange {
            label,
            classes: pred.len(),
        });
    }
    let sum: f64 = pred.data().iter().sum();
    if (sum - 1.0).abs() > 1e-4 {
        return Err(TensorError::NotNormalized(sum));
    }
    Ok(-pred.data()[label].max(PROB_FLOOR).ln())
}

/// Gradient of [`cross_entropy`] with respect to the probability vector.
pub fn cross_entropy_backward(pred: &Tensor, label: usize) -> Result<Tensor, TensorError> {
    if label >= pred.len() {
        return Err(TensorError::LabelOutOfRange {
            label,
            classes: pred.len(),
        });
    }
    let mut grad = vec![0.0; pred.len()];
    grad[label] = -1.0 / pred.data()[label].max(PROB_FLOOR);
    Tensor::new(pred.shape().to_vec(), grad)
}

/// Mean absolute error between two tensors of equal length.
pub fn mae(pred: &Tensor, target: &Tensor) -> Result<f64, TensorError> {
    if pred.is_empty() {
        return Err(TensorError::Empty("mae"));
    }
    if pred.len() != target.len() {
        return Err(TensorError::ShapeMismatch {
            op: "mae",
            detail: format!("{} vs {}", pred.len(), target.len()),
        });
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t).abs())
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Subgradient of [`mae`]: `sign(pred - target) / n` (0 at equality).
pub fn mae_backward(pred: &Tensor, target: &Tensor) -> Result<Tensor, TensorError> {
    if pred.len() != target.len() {
        return Err(TensorError::ShapeMismatch {
            op: "mae_backward",
            detail: format!("{} vs {}", pred.len(), target.len()),
        });
    }
    let n = pred.len() as f64;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            if p > t {
                1.0 / n
            } else if p < t {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Tensor::new(pred.shape().to_vec(), grad)
}
