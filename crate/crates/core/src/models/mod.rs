//! The two on-device networks: a gesture-classification CNN over IMU
//! windows and a dual-head object-to-(grasp, force) network.
//!
//! A [`ModelGraph`] is an ordered layer list with one or two output heads.
//! Builders produce zero-initialized graphs whose shapes are checked at
//! build time; [`train::init_weights`] randomizes parameters from a seed.

mod graspforce;
mod gesture;
mod quantized;
mod serial;
mod train;

pub use graspforce::{
    infer_grasp_force, make_grasp_force_dataset, train_grasp_force, GraspForceMetrics,
    GraspForceOptions, GraspForceSample,
};
pub use gesture::{
    infer_gesture, train_gesture, GestureDataset, GestureMetrics, GestureTrainOptions,
};
pub use quantized::{argmax_agreement, QuantizedModel};
pub use serial::{load_model, load_model_json, save_model, save_model_json, ModelIoError};
pub use train::{
    init_weights, sample_loss_and_grads, train_step, DropoutMasks, EarlyStop, Gradients, Tape,
    Target,
};

use crate::tensor::{
    self, conv2d_output_shape, Padding, QuantTensor, Tensor, TensorError,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Canonical synthetic dataset sizes.
pub mod gen_dataset_sizes {
    /// Labelled IMU windows in the gesture training set.
    pub const GESTURE_WINDOWS: usize = 660;
    /// Pressure data points in the grasp/force training set.
    pub const GRASP_POINTS: usize = 3000;
}

/// IMU sampling rate of the gesture pipeline.
pub const IMU_SAMPLE_RATE_HZ: f64 = 30.0;
/// Gesture window length in samples (2 s at 30 Hz).
pub const GESTURE_WINDOW_LEN: usize = 60;
/// Full-scale gyro value used to normalize model inputs (deg/s).
pub const GYRO_NORM: f64 = 180.0;
/// Full-scale accelerometer value used to normalize model inputs (g).
pub const ACCEL_NORM: f64 = 2.0;
/// Fingertip force full scale in newtons; force targets are normalized to it.
pub const FORCE_FULL_SCALE_N: f64 = 5.0;
/// Dropout rate used by the gesture CNN.
pub const DROPOUT_RATE: f64 = 0.3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("gesture window length {got} too short for the kernel stack; minimum {min}")]
    WindowTooShort { got: usize, min: usize },
    #[error("input shape {got:?} does not match model input {want:?}")]
    InputShape { got: Vec<usize>, want: Vec<usize> },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("gesture class {0:?} absent from training split")]
    ClassMissingFromTrain(GestureClass),
    #[error("object id {id} out of range for {classes} classes")]
    BadObjectId { id: usize, classes: usize },
    #[error(transparent)]
    Io(#[from] ModelIoError),
}

/// Wrist gesture classes, stable codes 0, 1, 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureClass {
    TiltRight = 0,
    TiltLeft = 1,
    NoAction = 2,
}

pub const ALL_GESTURES: [GestureClass; 3] = [
    GestureClass::TiltRight,
    GestureClass::TiltLeft,
    GestureClass::NoAction,
];

impl GestureClass {
    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        ALL_GESTURES.get(id).copied()
    }
}

/// Grasp patterns predicted by the grasp head, stable codes 0, 1, 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspPattern {
    PowerGrip = 0,
    Pinch = 1,
    Pronated = 2,
}

pub const ALL_PATTERNS: [GraspPattern; 3] = [
    GraspPattern::PowerGrip,
    GraspPattern::Pinch,
    GraspPattern::Pronated,
];

impl GraspPattern {
    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        ALL_PATTERNS.get(id).copied()
    }
}

/// Output of the grasp/force network for one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspDecision {
    pub pattern: GraspPattern,
    pub pattern_probs: [f64; 3],
    /// Predicted maximum grip force, normalized to [0, 1] of 5 N.
    pub max_force: f64,
}

impl GraspDecision {
    /// Predicted force ceiling in newtons.
    pub fn max_force_n(&self) -> f64 {
        self.max_force * FORCE_FULL_SCALE_N
    }
}

/// One labelled IMU window: `T x [ax, ay, az (g); gx, gy, gz (deg/s)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureWindow {
    pub samples: Vec<[f64; 6]>,
    pub label: Option<GestureClass>,
}

impl GestureWindow {
    /// Normalizes to the model's `[T, 6, 1]` input tensor.
    pub fn to_model_input(&self) -> Tensor {
        let t = self.samples.len();
        let mut data = Vec::with_capacity(t * 6);
        for s in &self.samples {
            data.push(s[0] / ACCEL_NORM);
            data.push(s[1] / ACCEL_NORM);
            data.push(s[2] / ACCEL_NORM);
            data.push(s[3] / GYRO_NORM);
            data.push(s[4] / GYRO_NORM);
            data.push(s[5] / GYRO_NORM);
        }
        Tensor::new(vec![t, 6, 1], data).expect("consistent window shape")
    }
}

/// A single layer of a [`ModelGraph`].
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d {
        kernels: Tensor,
        bias: Tensor,
        stride: (usize, usize),
        padding: Padding,
        /// Optional INT8 snapshot of the kernels (persisted in model files).
        quant: Option<QuantTensor>,
    },
    Dense {
        weights: Tensor,
        bias: Tensor,
        quant: Option<QuantTensor>,
    },
    Relu,
    Softmax,
    MaxPool2d { window: (usize, usize) },
    GlobalAvgPool,
    Flatten,
    Dropout { rate: f64 },
}

impl Layer {
    fn conv(kh: usize, kw: usize, c: usize, f: usize) -> Self {
        Layer::Conv2d {
            kernels: Tensor::zeros(vec![kh, kw, c, f]),
            bias: Tensor::zeros(vec![f]),
            stride: (1, 1),
            padding: Padding::Valid,
            quant: None,
        }
    }

    fn dense_zeroed(n: usize, m: usize) -> Self {
        Layer::Dense {
            weights: Tensor::zeros(vec![n, m]),
            bias: Tensor::zeros(vec![m]),
            quant: None,
        }
    }

    /// Output shape for a given input shape, or a composition error.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, TensorError> {
        match self {
            Layer::Conv2d {
                kernels,
                stride,
                padding,
                ..
            } => {
                let (h, w, c) = match *input {
                    [h, w, c] => (h, w, c),
                    _ => {
                        return Err(TensorError::ShapeMismatch {
                            op: "conv2d",
                            detail: format!("expected [H,W,C] input, got {:?}", input),
                        })
                    }
                };
                let ks = kernels.shape();
                if ks[2] != c {
                    return Err(TensorError::ShapeMismatch {
                        op: "conv2d",
                        detail: format!("kernel channels {} != input channels {}", ks[2], c),
                    });
                }
                let ((oh, ow), _) =
                    conv2d_output_shape((h, w), (ks[0], ks[1]), *stride, *padding)?;
                Ok(vec![oh, ow, ks[3]])
            }
            Layer::Dense { weights, .. } => {
                let n: usize = input.iter().product();
                if input.len() != 1 || weights.shape()[0] != n {
                    return Err(TensorError::ShapeMismatch {
                        op: "dense",
                        detail: format!("input {:?} vs weights {:?}", input, weights.shape()),
                    });
                }
                Ok(vec![weights.shape()[1]])
            }
            Layer::Relu | Layer::Dropout { .. } => Ok(input.to_vec()),
            Layer::Softmax => {
                if input.len() != 1 || input[0] == 0 {
                    return Err(TensorError::ShapeMismatch {
                        op: "softmax",
                        detail: format!("expected non-empty rank-1 input, got {:?}", input),
                    });
                }
                Ok(input.to_vec())
            }
            Layer::MaxPool2d { window } => {
                let (h, w, c) = match *input {
                    [h, w, c] => (h, w, c),
                    _ => {
                        return Err(TensorError::ShapeMismatch {
                            op: "max_pool2d",
                            detail: format!("expected [H,W,C], got {:?}", input),
                        })
                    }
                };
                let oh = h / window.0;
                let ow = w / window.1;
                if oh == 0 || ow == 0 {
                    return Err(TensorError::ShapeMismatch {
                        op: "max_pool2d",
                        detail: format!("window {:?} larger than input {}x{}", window, h, w),
                    });
                }
                Ok(vec![oh, ow, c])
            }
            Layer::GlobalAvgPool => match *input {
                [_, _, c] => Ok(vec![c]),
                _ => Err(TensorError::ShapeMismatch {
                    op: "global_avg_pool",
                    detail: format!("expected [H,W,C], got {:?}", input),
                }),
            },
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    /// Number of trainable parameters in this layer.
    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv2d { kernels, bias, .. } => kernels.len() + bias.len(),
            Layer::Dense { weights, bias, .. } => weights.len() + bias.len(),
            _ => 0,
        }
    }
}

/// An ordered layer list with an input shape and one or two output heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub input_shape: Vec<usize>,
    pub trunk: Vec<Layer>,
    pub heads: Vec<Vec<Layer>>,
}

impl ModelGraph {
    /// Checks that consecutive layer shapes compose; returns the output
    /// shape of each head.
    pub fn validate(&self) -> Result<Vec<Vec<usize>>, TensorError> {
        let mut shape = self.input_shape.clone();
        for layer in &self.trunk {
            shape = layer.output_shape(&shape)?;
        }
        let mut outs = Vec::new();
        for head in &self.heads {
            let mut s = shape.clone();
            for layer in head {
                s = layer.output_shape(&s)?;
            }
            outs.push(s);
        }
        Ok(outs)
    }

    /// Total trainable parameter count; a pure function of architecture.
    pub fn param_count(&self) -> usize {
        self.trunk
            .iter()
            .chain(self.heads.iter().flatten())
            .map(Layer::param_count)
            .sum()
    }

    fn check_input(&self, input: &Tensor) -> Result<(), ModelError> {
        if input.shape() != self.input_shape {
            return Err(ModelError::InputShape {
                got: input.shape().to_vec(),
                want: self.input_shape.clone(),
            });
        }
        Ok(())
    }

    fn forward_layer_infer(layer: &Layer, x: Tensor) -> Result<Tensor, TensorError> {
        match layer {
            Layer::Conv2d {
                kernels,
                bias,
                stride,
                padding,
                ..
            } => tensor::conv2d(&x, kernels, bias, *stride, *padding),
            Layer::Dense { weights, bias, .. } => tensor::dense(&x, weights, bias),
            Layer::Relu => tensor::relu(&x),
            Layer::Softmax => tensor::softmax(&x),
            Layer::MaxPool2d { window } => tensor::max_pool2d(&x, *window),
            Layer::GlobalAvgPool => tensor::global_avg_pool(&x),
            Layer::Flatten => x.reshape(vec![x.len()]),
            Layer::Dropout { .. } => Ok(x), // identity at inference
        }
    }

    /// Inference forward pass; dropout layers are identity.
    pub fn forward(&self, input: &Tensor) -> Result<Vec<Tensor>, ModelError> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.trunk {
            x = Self::forward_layer_infer(layer, x)?;
        }
        let mut outs = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let mut h = x.clone();
            for layer in head {
                h = Self::forward_layer_infer(layer, h)?;
            }
            outs.push(h);
        }
        Ok(outs)
    }

    /// Inference forward that also records every conv/dense output (used
    /// for quantization calibration), in trunk-then-heads order.
    pub fn forward_trace(&self, input: &Tensor) -> Result<(Vec<Tensor>, Vec<Tensor>), ModelError> {
        self.check_input(input)?;
        let mut trace = Vec::new();
        let mut x = input.clone();
        for layer in &self.trunk {
            x = Self::forward_layer_infer(layer, x)?;
            if matches!(layer, Layer::Conv2d { .. } | Layer::Dense { .. }) {
                trace.push(x.clone());
            }
        }
        let mut outs = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let mut h = x.clone();
            for layer in head {
                h = Self::forward_layer_infer(layer, h)?;
                if matches!(layer, Layer::Conv2d { .. } | Layer::Dense { .. }) {
                    trace.push(h.clone());
                }
            }
            outs.push(h);
        }
        Ok((outs, trace))
    }

    /// Quantizes every conv/dense weight tensor in place and stores the
    /// INT8 snapshot alongside the float weights (persisted by
    /// [`save_model`]).
    pub fn attach_weight_quant(&mut self) -> Result<(), TensorError> {
        for layer in self
            .trunk
            .iter_mut()
            .chain(self.heads.iter_mut().flatten())
        {
            match layer {
                Layer::Conv2d { kernels, quant, .. } => {
                    let p = tensor::calibrate_quant(&[kernels])?;
                    *quant = Some(tensor::quantize(kernels, p));
                }
                Layer::Dense { weights, quant, .. } => {
                    let p = tensor::calibrate_quant(&[weights])?;
                    *quant = Some(tensor::quantize(weights, p));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Index of the maximum value; ties break to the lowest index.
pub fn argmax_tie_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Minimum gesture window length accepted by [`build_gesture_cnn`].
///
/// Three valid convolutions shrink the time axis by 8 and the 2x1 pool
/// needs at least 2 remaining rows.
pub const MIN_GESTURE_WINDOW: usize = 10;

/// Builds the gesture CNN for `window_len x 6` IMU windows:
/// conv(5x2,32) / conv(3x2,64) / conv(3x2,128), each ReLU, then
/// maxpool(2x1), dropout, flatten, dropout, dense(128)+ReLU, dropout,
/// dense(3)+softmax. Parameters are zero-initialized.
pub fn build_gesture_cnn(window_len: usize) -> Result<ModelGraph, ModelError> {
    if window_len < MIN_GESTURE_WINDOW {
        return Err(ModelError::WindowTooShort {
            got: window_len,
            min: MIN_GESTURE_WINDOW,
        });
    }
    let rows_after_convs = window_len - 8;
    let pooled_rows = rows_after_convs / 2;
    let flat = pooled_rows * 3 * 128;
    let graph = ModelGraph {
        input_shape: vec![window_len, 6, 1],
        trunk: vec![
            Layer::conv(5, 2, 1, 32),
            Layer::Relu,
            Layer::conv(3, 2, 32, 64),
            Layer::Relu,
            Layer::conv(3, 2, 64, 128),
            Layer::Relu,
            Layer::MaxPool2d { window: (2, 1) },
            Layer::Dropout { rate: DROPOUT_RATE },
            Layer::Flatten,
            Layer::Dropout { rate: DROPOUT_RATE },
            Layer::dense_zeroed(flat, 128),
            Layer::Relu,
            Layer::Dropout { rate: DROPOUT_RATE },
            Layer::dense_zeroed(128, 3),
            Layer::Softmax,
        ],
        heads: vec![vec![]],
    };
    graph.validate()?;
    Ok(graph)
}

/// Builds the dual-head grasp/force network. Input is the detected object
/// id, normalized to `[0,1]` and reshaped to `1x1x1`; the trunk is a 1x1
/// conv with 16 filters plus ReLU and global average pooling; two parallel
/// dense(16)+ReLU branches end in a softmax grasp head and a linear force
/// head. Parameters are zero-initialized.
pub fn build_grasp_force_net(num_classes: usize) -> Result<ModelGraph, ModelError> {
    if num_classes == 0 {
        return Err(ModelError::EmptyDataset);
    }
    let graph = ModelGraph {
        input_shape: vec![1, 1, 1],
        trunk: vec![
            Layer::conv(1, 1, 1, 16),
            Layer::Relu,
            Layer::GlobalAvgPool,
        ],
        heads: vec![
            vec![
                Layer::dense_zeroed(16, 16),
                Layer::Relu,
                Layer::dense_zeroed(16, 3),
                Layer::Softmax,
            ],
            vec![
                Layer::dense_zeroed(16, 16),
                Layer::Relu,
                Layer::dense_zeroed(16, 1),
            ],
        ],
    };
    graph.validate()?;
    Ok(graph)
}

/// Normalized `1x1x1` input tensor for an object id.
pub fn object_id_input(object_id: usize, num_classes: usize) -> Result<Tensor, ModelError> {
    if object_id >= num_classes {
        return Err(ModelError::BadObjectId {
            id: object_id,
            classes: num_classes,
        });
    }
    let denom = (num_classes - 1).max(1) as f64;
    Ok(Tensor::new(vec![1, 1, 1], vec![object_id as f64 / denom]).expect("static shape"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gesture_cnn_shapes_compose() {
        let g = build_gesture_cnn(GESTURE_WINDOW_LEN).unwrap();
        let outs = g.validate().unwrap();
        assert_eq!(outs, vec![vec![3]]);
    }

    #[test]
    fn gesture_cnn_rejects_short_windows_with_minimum() {
        let err = build_gesture_cnn(8).unwrap_err();
        match err {
            ModelError::WindowTooShort { got: 8, min } => assert_eq!(min, MIN_GESTURE_WINDOW),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(build_gesture_cnn(MIN_GESTURE_WINDOW).is_ok());
    }

    #[test]
    fn gesture_cnn_parameter_count_matches_shape_arithmetic() {
        // Independent shape arithmetic for T=60:
        //   conv1 5*2*1*32+32, conv2 3*2*32*64+64, conv3 3*2*64*128+128,
        //   pooled rows (60-8)/2 = 26 -> flatten 26*3*128 = 9984,
        //   dense1 9984*128+128, dense2 128*3+3.
        let expected = (5 * 2 * 32 + 32)
            + (3 * 2 * 32 * 64 + 64)
            + (3 * 2 * 64 * 128 + 128)
            + (9984 * 128 + 128)
            + (128 * 3 + 3);
        assert_eq!(build_gesture_cnn(60).unwrap().param_count(), expected);
        // Frozen regression constant from the arithmetic above.
        assert_eq!(expected, 1_340_451);
    }

    #[test]
    fn zeroed_gesture_cnn_outputs_uniform_probs() {
        let g = build_gesture_cnn(60).unwrap();
        let window = GestureWindow {
            samples: vec![[0.1, -0.2, 1.0, 5.0, -3.0, 0.5]; 60],
            label: None,
        };
        let out = &g.forward(&window.to_model_input()).unwrap()[0];
        for &p in out.data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grasp_net_shapes_and_param_count() {
        let g = build_grasp_force_net(6).unwrap();
        let outs = g.validate().unwrap();
        assert_eq!(outs, vec![vec![3], vec![1]]);
        // Shape arithmetic: conv 1*1*1*16+16, two branches of
        // (16*16+16) and heads 16*3+3 / 16*1+1.
        let expected = (16 + 16) + (16 * 16 + 16) + (16 * 3 + 3) + (16 * 16 + 16) + (16 + 1);
        assert_eq!(g.param_count(), expected);
        assert_eq!(expected, 644);
    }

    #[test]
    fn zeroed_grasp_net_outputs_uniform_and_zero_force() {
        let g = build_grasp_force_net(6).unwrap();
        let outs = g.forward(&object_id_input(2, 6).unwrap()).unwrap();
        for &p in outs[0].data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(outs[1].data(), &[0.0]);
    }

    #[test]
    fn argmax_breaks_ties_to_lowest_index() {
        assert_eq!(argmax_tie_lowest(&[0.5, 0.5, 0.5]), 0);
        assert_eq!(argmax_tie_lowest(&[0.1, 0.7, 0.7]), 1);
        assert_eq!(argmax_tie_lowest(&[0.1, 0.2, 0.9]), 2);
    }

    #[test]
    fn object_id_input_is_normalized() {
        assert_eq!(object_id_input(0, 6).unwrap().data(), &[0.0]);
        assert_eq!(object_id_input(5, 6).unwrap().data(), &[1.0]);
        assert!(object_id_input(6, 6).is_err());
    }
}
