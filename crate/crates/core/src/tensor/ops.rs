//! Forward kernels and their reverse-mode counterparts.
//!
//! Layout conventions: feature maps are `[H, W, C]`, convolution kernels
//! are `[kh, kw, C, F]`, dense weights are `[N, M]`. The innermost loops
//! run over the contiguous filter dimension so they vectorize.

use super::{Tensor, TensorError};

/// Spatial padding mode for [`conv2d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Padding {
    /// No padding; output shrinks by `kernel - 1` per axis.
    Valid,
    /// Zero padding so that `out = ceil(in / stride)`.
    Same,
}

fn dims3(t: &Tensor, op: &'static str) -> Result<(usize, usize, usize), TensorError> {
    match *t.shape() {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(TensorError::ShapeMismatch {
            op,
            detail: format!("expected rank-3 [H,W,C] tensor, got {:?}", t.shape()),
        }),
    }
}

/// Convolution geometry: `((out_h, out_w), (pad_top, pad_left))`.
pub type ConvGeometry = ((usize, usize), (usize, usize));

/// Output spatial dims and top/left zero padding for a convolution.
pub fn conv2d_output_shape(
    input_hw: (usize, usize),
    kernel_hw: (usize, usize),
    stride: (usize, usize),
    padding: Padding,
) -> Result<ConvGeometry, TensorError> {
    let (h, w) = input_hw;
    let (kh, kw) = kernel_hw;
    let (sh, sw) = stride;
    if sh == 0 || sw == 0 {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            detail: "stride must be positive".into(),
        });
    }
    match padding {
        Padding::Valid => {
            if kh > h || kw > w {
                return Err(TensorError::ShapeMismatch {
                    op: "conv2d",
                    detail: format!(
                        "kernel {}x{} larger than input {}x{} with valid padding",
                        kh, kw, h, w
                    ),
                });
            }
            Ok((((h - kh) / sh + 1, (w - kw) / sw + 1), (0, 0)))
        }
        Padding::Same => {
            let out_h = h.div_ceil(sh);
            let out_w = w.div_ceil(sw);
            let pad_h = ((out_h - 1) * sh + kh).saturating_sub(h);
            let pad_w = ((out_w - 1) * sw + kw).saturating_sub(w);
            Ok(((out_h, out_w), (pad_h / 2, pad_w / 2)))
        }
    }
}

fn conv2d_check(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
) -> Result<(usize, usize, usize, usize, usize, usize), TensorError> {
    let (h, w, c) = dims3(input, "conv2d")?;
    let (kh, kw, kc, f) = match *kernels.shape() {
        [kh, kw, kc, f] => (kh, kw, kc, f),
        _ => {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                detail: format!("expected rank-4 [kh,kw,C,F] kernels, got {:?}", kernels.shape()),
            })
        }
    };
    if kc != c {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            detail: format!("kernel channels {} != input channels {}", kc, c),
        });
    }
    if bias.shape() != [f] {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            detail: format!("bias shape {:?} != [{}]", bias.shape(), f),
        });
    }
    Ok((h, w, c, kh, kw, f))
}

/// 2-D cross-correlation of an `[H,W,C]` input with `[kh,kw,C,F]` kernels.
pub fn conv2d(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: (usize, usize),
    padding: Padding,
) -> Result<Tensor, TensorError> {
    let (h, w, c, kh, kw, f) = conv2d_check(input, kernels, bias)?;
    let ((out_h, out_w), (pad_top, pad_left)) =
        conv2d_output_shape((h, w), (kh, kw), stride, padding)?;
    let (sh, sw) = stride;

    let x = input.data();
    let k = kernels.data();
    let b = bias.data();
    let mut out = vec![0.0f64; out_h * out_w * f];

    for oy in 0..out_h {
        for ox in 0..out_w {
            let acc = &mut out[(oy * out_w + ox) * f..][..f];
            acc.copy_from_slice(b);
            for ky in 0..kh {
                let iy = (oy * sh + ky) as isize - pad_top as isize;
                if iy < 0 || iy as usize >= h {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * sw + kx) as isize - pad_left as isize;
                    if ix < 0 || ix as usize >= w {
                        continue;
                    }
                    let xin = &x[(iy as usize * w + ix as usize) * c..][..c];
                    let krow = &k[((ky * kw + kx) * c) * f..][..c * f];
                    for (ci, &xv) in xin.iter().enumerate() {
                        let kf = &krow[ci * f..][..f];
                        for (a, &kv) in acc.iter_mut().zip(kf) {
                            *a += xv * kv;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![out_h, out_w, f], out)
}

/// Gradients of a scalar loss through [`conv2d`].
///
/// Returns `(d_input, d_kernels, d_bias)` for upstream gradient `dout` of
/// shape `[out_h, out_w, F]`.
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    stride: (usize, usize),
    padding: Padding,
    dout: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), TensorError> {
    let mut dk = Tensor::zeros(kernels.shape().to_vec());
    let mut db = Tensor::zeros(vec![kernels.shape()[3]]);
    let dx = conv2d_backward_acc(input, kernels, stride, padding, dout, &mut dk, &mut db, true)?
        .expect("dx requested");
    Ok((dx, dk, db))
}

/// [`conv2d_backward`] accumulating parameter gradients in place; the
/// input gradient is computed only when `want_dx` (the first layer of a
/// net has no consumer for it).
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward_acc(
    input: &Tensor,
    kernels: &Tensor,
    stride: (usize, usize),
    padding: Padding,
    dout: &Tensor,
    dk_acc: &mut Tensor,
    db_acc: &mut Tensor,
    want_dx: bool,
) -> Result<Option<Tensor>, TensorError> {
    let (h, w, c) = dims3(input, "conv2d_backward")?;
    let (kh, kw, f) = match *kernels.shape() {
        [kh, kw, kc, f] if kc == c => (kh, kw, f),
        _ => {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d_backward",
                detail: format!("kernels {:?} vs input {:?}", kernels.shape(), input.shape()),
            })
        }
    };
    let ((out_h, out_w), (pad_top, pad_left)) =
        conv2d_output_shape((h, w), (kh, kw), stride, padding)?;
    if dout.shape() != [out_h, out_w, f] {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d_backward",
            detail: format!("dout shape {:?} != [{out_h},{out_w},{f}]", dout.shape()),
        });
    }
    if dk_acc.shape() != kernels.shape() || db_acc.len() != f {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d_backward",
            detail: "gradient accumulator shape mismatch".into(),
        });
    }
    let (sh, sw) = stride;

    let x = input.data();
    let k = kernels.data();
    let g = dout.data();
    let mut dx = if want_dx {
        vec![0.0f64; x.len()]
    } else {
        Vec::new()
    };
    let dk = dk_acc.data_mut();

    for oy in 0..out_h {
        for ox in 0..out_w {
            let grow = &g[(oy * out_w + ox) * f..][..f];
            for (dbf, &gv) in db_acc.data_mut().iter_mut().zip(grow) {
                *dbf += gv;
            }
            for ky in 0..kh {
                let iy = (oy * sh + ky) as isize - pad_top as isize;
                if iy < 0 || iy as usize >= h {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * sw + kx) as isize - pad_left as isize;
                    if ix < 0 || ix as usize >= w {
                        continue;
                    }
                    let base_in = (iy as usize * w + ix as usize) * c;
                    let base_k = ((ky * kw + kx) * c) * f;
                    for ci in 0..c {
                        let xv = x[base_in + ci];
                        if xv != 0.0 {
                            let dkf = &mut dk[base_k + ci * f..][..f];
                            for (d, &gv) in dkf.iter_mut().zip(grow) {
                                *d += xv * gv;
                            }
                        }
                        if want_dx {
                            let kf = &k[base_k + ci * f..][..f];
                            let mut acc = 0.0;
                            for (a, &gv) in kf.iter().zip(grow) {
                                acc += a * gv;
                            }
                            dx[base_in + ci] += acc;
                        }
                    }
                }
            }
        }
    }
    Ok(if want_dx {
        Some(Tensor::new(input.shape().to_vec(), dx)?)
    } else {
        None
    })
}

/// Fully connected layer: `out[j] = sum_i in[i] * w[i,j] + b[j]`.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, TensorError> {
    let n = input.len();
    let (wn, m) = match *weights.shape() {
        [wn, m] => (wn, m),
        _ => {
            return Err(TensorError::ShapeMismatch {
                op: "dense",
                detail: format!("expected rank-2 [N,M] weights, got {:?}", weights.shape()),
            })
        }
    };
    if wn != n || bias.len() != m {
        return Err(TensorError::ShapeMismatch {
            op: "dense",
            detail: format!(
                "input len {} vs weights {:?} vs bias len {}",
                n,
                weights.shape(),
                bias.len()
            ),
        });
    }
    let mut out = bias.data().to_vec();
    let w = weights.data();
    for (i, &xv) in input.data().iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let row = &w[i * m..][..m];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += xv * wv;
        }
    }
    Tensor::new(vec![m], out)
}

/// Gradients of a scalar loss through [`dense`].
pub fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    dout: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), TensorError> {
    let mut dw = Tensor::zeros(weights.shape().to_vec());
    let mut db = Tensor::zeros(vec![dout.len()]);
    let dx = dense_backward_acc(input, weights, dout, &mut dw, &mut db, true)?
        .expect("dx requested");
    Ok((dx, dw, db))
}

/// [`dense_backward`] accumulating parameter gradients in place, skipping
/// zero activations (common after ReLU and dropout).
pub fn dense_backward_acc(
    input: &Tensor,
    weights: &Tensor,
    dout: &Tensor,
    dw_acc: &mut Tensor,
    db_acc: &mut Tensor,
    want_dx: bool,
) -> Result<Option<Tensor>, TensorError> {
    let n = input.len();
    let (wn, m) = match *weights.shape() {
        [wn, m] => (wn, m),
        _ => {
            return Err(TensorError::ShapeMismatch {
                op: "dense_backward",
                detail: format!("weights shape {:?}", weights.shape()),
            })
        }
    };
    if wn != n || dout.len() != m {
        return Err(TensorError::ShapeMismatch {
            op: "dense_backward",
            detail: format!("input {}, weights {:?}, dout {}", n, weights.shape(), dout.len()),
        });
    }
    if dw_acc.shape() != weights.shape() || db_acc.len() != m {
        return Err(TensorError::ShapeMismatch {
            op: "dense_backward",
            detail: "gradient accumulator shape mismatch".into(),
        });
    }
    let w = weights.data();
    let g = dout.data();
    let dw = dw_acc.data_mut();
    let mut dx = if want_dx {
        vec![0.0f64; n]
    } else {
        Vec::new()
    };
    for i in 0..n {
        let xv = input.data()[i];
        if xv != 0.0 {
            let drow = &mut dw[i * m..][..m];
            for (d, &gv) in drow.iter_mut().zip(g) {
                *d += xv * gv;
            }
        }
        if want_dx {
            let row = &w[i * m..][..m];
            let mut acc = 0.0;
            for (a, &gv) in row.iter().zip(g) {
                acc += a * gv;
            }
            dx[i] = acc;
        }
    }
    for (d, &gv) in db_acc.data_mut().iter_mut().zip(g) {
        *d += gv;
    }
    Ok(if want_dx {
        Some(Tensor::new(vec![n], dx)?)
    } else {
        None
    })
}

/// Elementwise `max(0, x)`.
pub fn relu(input: &Tensor) -> Result<Tensor, TensorError> {
    if input.is_empty() {
        return Err(TensorError::Empty("relu"));
    }
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// ReLU gradient: passes `dout` where the forward input was positive.
pub fn relu_backward(input: &Tensor, dout: &Tensor) -> Result<Tensor, TensorError> {
    if input.len() != dout.len() {
        return Err(TensorError::ShapeMismatch {
            op: "relu_backward",
            detail: format!("{} vs {}", input.len(), dout.len()),
        });
    }
    let data = input
        .data()
        .iter()
        .zip(dout.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Numerically stable softmax over a 1-D tensor.
///
/// The maximum logit is subtracted before exponentiation, so the output is
/// invariant to adding a constant to all logits and always sums to 1.
pub fn softmax(input: &Tensor) -> Result<Tensor, TensorError> {
    if input.is_empty() {
        return Err(TensorError::Empty("softmax"));
    }
    if !input.is_finite() {
        return Err(TensorError::NonFinite("softmax"));
    }
    let max = input.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = input.data().iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Tensor::new(input.shape().to_vec(), exps.iter().map(|e| e / sum).collect())
}

/// Softmax Jacobian-vector product: `ds_i = p_i * (g_i - sum_j g_j p_j)`.
pub fn softmax_backward(output: &Tensor, dout: &Tensor) -> Result<Tensor, TensorError> {
    if output.len() != dout.len() {
        return Err(TensorError::ShapeMismatch {
            op: "softmax_backward",
            detail: format!("{} vs {}", output.len(), dout.len()),
        });
    }
    let dot: f64 = output
        .data()
        .iter()
        .zip(dout.data())
        .map(|(&p, &g)| p * g)
        .sum();
    let data = output
        .data()
        .iter()
        .zip(dout.data())
        .map(|(&p, &g)| p * (g - dot))
        .collect();
    Tensor::new(output.shape().to_vec(), data)
}

/// Max pooling with window `(ph, pw)`; trailing rows/cols that do not fill
/// a full window are truncated (floor arithmetic).
pub fn max_pool2d(input: &Tensor, window: (usize, usize)) -> Result<Tensor, TensorError> {
    let (h, w, c) = dims3(input, "max_pool2d")?;
    let (ph, pw) = window;
    if ph == 0 || pw == 0 || ph > h || pw > w {
        return Err(TensorError::ShapeMismatch {
            op: "max_pool2d",
            detail: format!("window {}x{} invalid for input {}x{}", ph, pw, h, w),
        });
    }
    let out_h = h / ph;
    let out_w = w / pw;
    let x = input.data();
    let mut out = vec![f64::NEG_INFINITY; out_h * out_w * c];
    for oy in 0..out_h {
        for ox in 0..out_w {
            let cell = &mut out[(oy * out_w + ox) * c..][..c];
            for dy in 0..ph {
                for dx in 0..pw {
                    let src = &x[((oy * ph + dy) * w + ox * pw + dx) * c..][..c];
                    for (o, &v) in cell.iter_mut().zip(src) {
                        if v > *o {
                            *o = v;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![out_h, out_w, c], out)
}

/// Max-pool gradient; ties route to the first maximum in scan order.
pub fn max_pool2d_backward(
    input: &Tensor,
    window: (usize, usize),
    dout: &Tensor,
) -> Result<Tensor, TensorError> {
    let (h, w, c) = dims3(input, "max_pool2d_backward")?;
    let (ph, pw) = window;
    let out_h = h / ph;
    let out_w = w / pw;
    if dout.shape() != [out_h, out_w, c] {
        return Err(TensorError::ShapeMismatch {
            op: "max_pool2d_backward",
            detail: format!("dout {:?} != [{out_h},{out_w},{c}]", dout.shape()),
        });
    }
    let x = input.data();
    let g = dout.data();
    let mut dx = vec![0.0f64; x.len()];
    for oy in 0..out_h {
        for ox in 0..out_w {
            for ci in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dy in 0..ph {
                    for dxw in 0..pw {
                        let idx = ((oy * ph + dy) * w + ox * pw + dxw) * c + ci;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                dx[best_idx] += g[(oy * out_w + ox) * c + ci];
            }
        }
    }
    Tensor::new(input.shape().to_vec(), dx)
}

/// Global average pooling: `[H,W,C] -> [C]`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor, TensorError> {
    let (h, w, c) = dims3(input, "global_avg_pool")?;
    if h == 0 || w == 0 || c == 0 {
        return Err(TensorError::Empty("global_avg_pool"));
    }
    let n = (h * w) as f64;
    let mut out = vec![0.0f64; c];
    for px in input.data().chunks_exact(c) {
        for (o, &v) in out.iter_mut().zip(px) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= n;
    }
    Tensor::new(vec![c], out)
}

/// Gradient of [`global_avg_pool`]: spreads `dout / (H*W)` over each cell.
pub fn global_avg_pool_backward(
    input_shape: &[usize],
    dout: &Tensor,
) -> Result<Tensor, TensorError> {
    let (h, w, c) = match *input_shape {
        [h, w, c] => (h, w, c),
        _ => {
            return Err(TensorError::ShapeMismatch {
                op: "global_avg_pool_backward",
                detail: format!("input shape {:?}", input_shape),
            })
        }
    };
    if dout.len() != c {
        return Err(TensorError::ShapeMismatch {
            op: "global_avg_pool_backward",
            detail: format!("dout len {} != channels {}", dout.len(), c),
        });
    }
    let n = (h * w) as f64;
    let mut dx = vec![0.0f64; h * w * c];
    for px in dx.chunks_exact_mut(c) {
        for (o, &g) in px.iter_mut().zip(dout.data()) {
            *o = g / n;
        }
    }
    Tensor::new(vec![h, w, c], dx)
}
