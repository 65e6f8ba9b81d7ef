//! Minimal tensor engine shared by all models.
//!
//! Tensors are dense `f64` arrays in row-major order. The kernel set is
//! exactly what the two on-device networks need: 2-D cross-correlation,
//! dense layers, ReLU/softmax, max/global-average pooling, the two losses
//! and symmetric power-of-two INT8 quantization. All operations are pure
//! functions of their inputs and safe to call from any thread.

mod loss;
mod ops;
mod quant;

pub use loss::{cross_entropy, cross_entropy_backward, mae, mae_backward, PROB_FLOOR};
pub use ops::{
    conv2d, conv2d_backward, conv2d_backward_acc, conv2d_output_shape, dense, dense_backward,
    dense_backward_acc, global_avg_pool, global_avg_pool_backward, max_pool2d,
    max_pool2d_backward, relu, relu_backward, softmax, softmax_backward, Padding,
};
pub use quant::{calibrate_quant, dequantize, fake_quantize, quantize, QuantParams, QuantTensor};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors produced by tensor kernels and quantization.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("data length {data_len} does not match shape {shape:?} (expected {expected})")]
    LengthMismatch {
        shape: Vec<usize>,
        data_len: usize,
        expected: usize,
    },
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{0}: empty tensor rejected")]
    Empty(&'static str),
    #[error("{0}: non-finite values rejected")]
    NonFinite(&'static str),
    #[error("quantization scale {0} is not a positive power of two")]
    InvalidScale(f64),
    #[error("class label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("probabilities sum to {0}, expected 1 within 1e-4")]
    NotNormalized(f64),
    #[error("non-finite loss; training step aborted")]
    NonFiniteLoss,
}

/// Dense row-major tensor of `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that `data.len()` equals the product of
    /// the shape dims.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::LengthMismatch {
                shape,
                data_len: data.len(),
                expected,
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    /// 1-D tensor from a vector.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Reinterprets the tensor with a new shape of equal element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self, TensorError> {
        Self::new(shape, self.data.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute value, 0 for the empty tensor.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_mismatch_rejected() {
        let err = Tensor::new(vec![2, 3], vec![1.0; 5]).unwrap_err();
        assert!(matches!(err, TensorError::LengthMismatch { expected: 6, .. }));
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let r = t.reshape(vec![3, 2, 1]).unwrap();
        assert_eq!(r.shape(), &[3, 2, 1]);
        assert_eq!(r.data(), t.data());
        assert!(t.reshape(vec![4]).is_err());
    }

    #[test]
    fn max_abs_of_zeros_is_zero() {
        assert_eq!(Tensor::zeros(vec![4]).max_abs(), 0.0);
        let t = Tensor::from_vec(vec![-3.5, 2.0]);
        assert_eq!(t.max_abs(), 3.5);
    }
}
