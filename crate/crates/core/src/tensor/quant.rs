//! Symmetric INT8 quantization with power-of-two scales.
//!
//! Scales are restricted to exact powers of two so that rescaling between
//! layers of an integer pipeline reduces to a shift, mirroring the
//! accumulator handling of fixed-point inference hardware. Rounding is
//! half-away-from-zero everywhere for cross-platform determinism.

use super::{Tensor, TensorError};
use serde::{Deserialize, Serialize};

pub const QUANT_MIN: i32 = -128;
pub const QUANT_MAX: i32 = 127;

/// Default scale exponent used when calibration sees only zeros.
pub const DEFAULT_ZERO_EXPONENT: i8 = -7;

/// Per-tensor quantization parameters: symmetric, zero-point 0, 8-bit,
/// scale an exact power of two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    scale: f64,
    bit_width: u8,
    zero_point: i8,
}

impl QuantParams {
    /// Validates that `scale` is a positive power of two.
    pub fn new(scale: f64) -> Result<Self, TensorError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(TensorError::InvalidScale(scale));
        }
        let exp = scale.log2().round();
        if 2.0f64.powi(exp as i32) != scale || !(-126.0..=126.0).contains(&exp) {
            return Err(TensorError::InvalidScale(scale));
        }
        Ok(Self {
            scale,
            bit_width: 8,
            zero_point: 0,
        })
    }

    /// Scale `2^k` for integer exponent `k`.
    pub fn from_exponent(k: i8) -> Self {
        Self {
            scale: 2.0f64.powi(k as i32),
            bit_width: 8,
            zero_point: 0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Integer `k` such that scale = `2^k`.
    pub fn exponent(&self) -> i8 {
        self.scale.log2().round() as i8
    }

    pub fn bit_width(&self) -> u8 {
        self.bit_width
    }

    pub fn zero_point(&self) -> i8 {
        self.zero_point
    }

    /// Upper edge of the representable range, `127 * scale`.
    pub fn max_representable(&self) -> f64 {
        QUANT_MAX as f64 * self.scale
    }
}

/// Dense tensor of signed 8-bit values plus its quantization parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantTensor {
    pub shape: Vec<usize>,
    pub data: Vec<i8>,
    pub params: QuantParams,
}

impl QuantTensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Rounds half-away-from-zero (`f64::round` semantics), then clamps into
/// the signed 8-bit range.
fn quantize_value(x: f64, scale: f64) -> i8 {
    let q = (x / scale).round();
    q.clamp(QUANT_MIN as f64, QUANT_MAX as f64) as i8
}

/// Quantizes a float tensor: `q = clamp(round(x / scale), -128, 127)`.
pub fn quantize(t: &Tensor, p: QuantParams) -> QuantTensor {
    QuantTensor {
        shape: t.shape().to_vec(),
        data: t.data().iter().map(|&x| quantize_value(x, p.scale)).collect(),
        params: p,
    }
}

/// Recovers `q * scale` as a float tensor.
pub fn dequantize(q: &QuantTensor) -> Tensor {
    let data = q.data.iter().map(|&v| v as f64 * q.params.scale).collect();
    Tensor::new(q.shape.clone(), data).expect("quant tensor shape consistent")
}

/// `dequantize(quantize(x))` in one step; used to simulate INT8 precision
/// inside a float forward pass during quantization-aware training.
pub fn fake_quantize(t: &Tensor, p: QuantParams) -> Tensor {
    let data = t
        .data()
        .iter()
        .map(|&x| quantize_value(x, p.scale) as f64 * p.scale)
        .collect();
    Tensor::new(t.shape().to_vec(), data).expect("shape preserved")
}

/// Picks the smallest power-of-two scale `s` with `127 * s >= max|x|` over
/// all samples. All-zero (or empty) samples fall back to `2^-7`.
pub fn calibrate_quant(samples: &[&Tensor]) -> Result<QuantParams, TensorError> {
    let mut max_abs = 0.0f64;
    for t in samples {
        if !t.is_finite() {
            return Err(TensorError::NonFinite("calibrate_quant"));
        }
        max_abs = max_abs.max(t.max_abs());
    }
    if samples.is_empty() {
        return Err(TensorError::Empty("calibrate_quant"));
    }
    if max_abs == 0.0 {
        return Ok(QuantParams::from_exponent(DEFAULT_ZERO_EXPONENT));
    }
    // Start from the float estimate and adjust so the bound holds exactly.
    let qmax = QUANT_MAX as f64;
    let mut k = (max_abs / qmax).log2().ceil() as i32;
    while 2.0f64.powi(k) * qmax < max_abs {
        k += 1;
    }
    while k > -126 && 2.0f64.powi(k - 1) * qmax >= max_abs {
        k -= 1;
    }
    let k = k.clamp(-126, 126) as i8;
    Ok(QuantParams::from_exponent(k))
}
