//! Integer INT8 inference for trained models.
//!
//! Weights and activations are quantized symmetrically with power-of-two
//! scales; conv/dense layers accumulate `i8 x i8` products in wide
//! integers and requantize to the next activation scale, which for
//! power-of-two scales is an exact binary shift. The last conv/dense
//! before each head output dequantizes its accumulator directly so logits
//! keep full precision; softmax runs in float.

use super::{argmax_tie_lowest, Layer, ModelError, ModelGraph};
use crate::tensor::{
    calibrate_quant, conv2d_output_shape, quantize, Padding, QuantParams, QuantTensor, Tensor,
    TensorError,
};

#[derive(Debug, Clone)]
enum Requant {
    /// Requantize the accumulator to this activation scale.
    Int(QuantParams),
    /// Dequantize the accumulator to float (final layer of a path).
    Float,
}

#[derive(Debug, Clone)]
enum QLayer {
    Conv2d {
        kernels: QuantTensor,
        bias_q: Vec<i64>,
        stride: (usize, usize),
        padding: Padding,
        out: Requant,
    },
    Dense {
        weights: QuantTensor,
        bias_q: Vec<i64>,
        out: Requant,
    },
    Relu,
    Softmax,
    MaxPool2d { window: (usize, usize) },
    GlobalAvgPool,
    Flatten,
}

/// Activation flowing through the integer pipeline.
#[derive(Debug, Clone)]
enum Act {
    Int {
        data: Vec<i8>,
        shape: Vec<usize>,
        params: QuantParams,
    },
    Float(Tensor),
}

/// An INT8 model derived from a float [`ModelGraph`] plus calibration
/// inputs. Immutable after construction; inference is pure.
#[derive(Debug, Clone)]
pub struct QuantizedModel {
    input_shape: Vec<usize>,
    input_params: QuantParams,
    trunk: Vec<QLayer>,
    heads: Vec<Vec<QLayer>>,
}

fn params_for_max_abs(max_abs: f64) -> Result<QuantParams, TensorError> {
    calibrate_quant(&[&Tensor::from_vec(vec![max_abs])])
}

fn round_clamp_i8(v: f64) -> i8 {
    v.round().clamp(-128.0, 127.0) as i8
}

impl QuantizedModel {
    /// Builds the integer model: per-layer weight scales from the weights
    /// themselves (or a stored INT8 snapshot), activation scales from the
    /// calibration inputs.
    pub fn from_model(model: &ModelGraph, calib: &[Tensor]) -> Result<Self, ModelError> {
        if calib.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        // Max |activation| per conv/dense boundary, in graph order.
        let n_boundaries = model
            .trunk
            .iter()
            .chain(model.heads.iter().flatten())
            .filter(|l| matches!(l, Layer::Conv2d { .. } | Layer::Dense { .. }))
            .count();
        let mut act_max = vec![0.0f64; n_boundaries];
        let mut input_max = 0.0f64;
        for input in calib {
            input_max = input_max.max(input.max_abs());
            let (_, trace) = model.forward_trace(input)?;
            debug_assert_eq!(trace.len(), n_boundaries);
            for (m, t) in act_max.iter_mut().zip(&trace) {
                *m = m.max(t.max_abs());
            }
        }
        let input_params = params_for_max_abs(input_max)?;

        // Trunk layers are final only if no conv/dense follows anywhere.
        let trunk_tail_has_params = |idx: usize| {
            model.trunk[idx + 1..]
                .iter()
                .chain(model.heads.iter().flatten())
                .any(|l| matches!(l, Layer::Conv2d { .. } | Layer::Dense { .. }))
        };

        let mut boundary = 0usize;
        let mut build = |layers: &[Layer],
                         is_final: &dyn Fn(usize) -> bool|
         -> Result<Vec<QLayer>, ModelError> {
            let mut out = Vec::new();
            for (i, layer) in layers.iter().enumerate() {
                match layer {
                    Layer::Conv2d {
                        kernels,
                        bias,
                        stride,
                        padding,
                        quant,
                    } => {
                        let kq = match quant {
                            Some(q) => q.clone(),
                            None => quantize(kernels, calibrate_quant(&[kernels])?),
                        };
                        let req = if is_final(i) {
                            Requant::Float
                        } else {
                            Requant::Int(params_for_max_abs(act_max[boundary])?)
                        };
                        out.push(QLayer::Conv2d {
                            kernels: kq,
                            bias_q: vec![0; bias.len()], // filled below
                            stride: *stride,
                            padding: *padding,
                            out: req,
                        });
                        boundary += 1;
                    }
                    Layer::Dense {
                        weights,
                        bias,
                        quant,
                    } => {
                        let wq = match quant {
                            Some(q) => q.clone(),
                            None => quantize(weights, calibrate_quant(&[weights])?),
                        };
                        let req = if is_final(i) {
                            Requant::Float
                        } else {
                            Requant::Int(params_for_max_abs(act_max[boundary])?)
                        };
                        out.push(QLayer::Dense {
                            weights: wq,
                            bias_q: vec![0; bias.len()],
                            out: req,
                        });
                        boundary += 1;
                    }
                    Layer::Relu => out.push(QLayer::Relu),
                    Layer::Softmax => out.push(QLayer::Softmax),
                    Layer::MaxPool2d { window } => out.push(QLayer::MaxPool2d { window: *window }),
                    Layer::GlobalAvgPool => out.push(QLayer::GlobalAvgPool),
                    Layer::Flatten => out.push(QLayer::Flatten),
                    Layer::Dropout { .. } => {} // identity at inference
                }
            }
            Ok(out)
        };

        let trunk_q = build(&model.trunk, &|i| !trunk_tail_has_params(i))?;
        let mut heads_q = Vec::with_capacity(model.heads.len());
        for head in &model.heads {
            let final_in_head = |i: usize| {
                !head[i + 1..]
                    .iter()
                    .any(|l| matches!(l, Layer::Conv2d { .. } | Layer::Dense { .. }))
            };
            heads_q.push(build(head, &final_in_head)?);
        }

        let mut qm = QuantizedModel {
            input_shape: model.input_shape.clone(),
            input_params,
            trunk: trunk_q,
            heads: heads_q,
        };
        qm.fill_biases(model)?;
        Ok(qm)
    }

    /// Quantizes float biases at each layer's accumulator scale
    /// (`in_scale * weight_scale`), walking activation params through the
    /// graph exactly as inference will.
    fn fill_biases(&mut self, model: &ModelGraph) -> Result<(), ModelError> {
        fn walk(
            qlayers: &mut [QLayer],
            flayers: &[Layer],
            mut params: QuantParams,
        ) -> QuantParams {
            let mut qi = 0usize;
            for layer in flayers {
                if matches!(layer, Layer::Dropout { .. }) {
                    continue;
                }
                match (&mut qlayers[qi], layer) {
                    (
                        QLayer::Conv2d {
                            kernels, bias_q, out, ..
                        },
                        Layer::Conv2d { bias, .. },
                    )
                    | (
                        QLayer::Dense {
                            weights: kernels,
                            bias_q,
                            out,
                            ..
                        },
                        Layer::Dense { bias, .. },
                    ) => {
                        let acc_scale = params.scale() * kernels.params.scale();
                        for (q, &b) in bias_q.iter_mut().zip(bias.data()) {
                            *q = (b / acc_scale).round() as i64;
                        }
                        if let Requant::Int(p) = out {
                            params = *p;
                        }
                    }
                    _ => {}
                }
                qi += 1;
            }
            params
        }
        let trunk_flayers: Vec<Layer> = model.trunk.clone();
        let trunk_out_params = walk(&mut self.trunk, &trunk_flayers, self.input_params);
        for (qhead, fhead) in self.heads.iter_mut().zip(&model.heads) {
            walk(qhead, fhead, trunk_out_params);
        }
        Ok(())
    }

    /// Integer forward pass; returns one float tensor per head (softmax
    /// heads yield probabilities, linear heads dequantized values).
    pub fn forward(&self, input: &Tensor) -> Result<Vec<Tensor>, ModelError> {
        if input.shape() != self.input_shape {
            return Err(ModelError::InputShape {
                got: input.shape().to_vec(),
                want: self.input_shape.clone(),
            });
        }
        let q = quantize(input, self.input_params);
        let start = Act::Int {
            data: q.data,
            shape: q.shape,
            params: q.params,
        };
        let mut act = start;
        for layer in &self.trunk {
            act = forward_qlayer(layer, act)?;
        }
        let mut outs = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let mut h = act.clone();
            for layer in head {
                h = forward_qlayer(layer, h)?;
            }
            outs.push(match h {
                Act::Float(t) => t,
                Act::Int { data, shape, params } => {
                    let vals = data.iter().map(|&v| v as f64 * params.scale()).collect();
                    Tensor::new(shape, vals)?
                }
            });
        }
        Ok(outs)
    }

    pub fn input_params(&self) -> QuantParams {
        self.input_params
    }
}

fn expect_int(act: Act, op: &'static str) -> Result<(Vec<i8>, Vec<usize>, QuantParams), TensorError> {
    match act {
        Act::Int { data, shape, params } => Ok((data, shape, params)),
        Act::Float(_) => Err(TensorError::ShapeMismatch {
            op,
            detail: "integer layer after a dequantized output".into(),
        }),
    }
}

fn emit(acc: Vec<i64>, shape: Vec<usize>, acc_exp: i32, out: &Requant) -> Result<Act, TensorError> {
    match out {
        Requant::Float => {
            let scale = 2.0f64.powi(acc_exp);
            let vals = acc.iter().map(|&a| a as f64 * scale).collect();
            Ok(Act::Float(Tensor::new(shape, vals)?))
        }
        Requant::Int(p) => {
            let shift = 2.0f64.powi(acc_exp - p.exponent() as i32);
            let data = acc.iter().map(|&a| round_clamp_i8(a as f64 * shift)).collect();
            Ok(Act::Int {
                data,
                shape,
                params: *p,
            })
        }
    }
}

fn forward_qlayer(layer: &QLayer, act: Act) -> Result<Act, TensorError> {
    match layer {
        QLayer::Conv2d {
            kernels,
            bias_q,
            stride,
            padding,
            out,
        } => {
            let (x, shape, params) = expect_int(act, "conv2d_i8")?;
            let (h, w, c) = (shape[0], shape[1], shape[2]);
            let ks = &kernels.shape;
            let (kh, kw, f) = (ks[0], ks[1], ks[3]);
            let ((out_h, out_w), (pad_top, pad_left)) =
                conv2d_output_shape((h, w), (kh, kw), *stride, *padding)?;
            let k = &kernels.data;
            let mut acc = vec![0i64; out_h * out_w * f];
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let cell = &mut acc[(oy * out_w + ox) * f..][..f];
                    for (a, &b) in cell.iter_mut().zip(bias_q) {
                        *a = b;
                    }
                    for ky in 0..kh {
                        let iy = (oy * stride.0 + ky) as isize - pad_top as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride.1 + kx) as isize - pad_left as isize;
                            if ix < 0 || ix as usize >= w {
                                continue;
                            }
                            let xin = &x[(iy as usize * w + ix as usize) * c..][..c];
                            let base_k = ((ky * kw + kx) * c) * f;
                            for (ci, &xv) in xin.iter().enumerate() {
                                if xv == 0 {
                                    continue;
                                }
                                let xv = xv as i64;
                                let kf = &k[base_k + ci * f..][..f];
                                for (a, &kv) in cell.iter_mut().zip(kf) {
                                    *a += xv * kv as i64;
                                }
                            }
                        }
                    }
                }
            }
            let acc_exp = params.exponent() as i32 + kernels.params.exponent() as i32;
            emit(acc, vec![out_h, out_w, f], acc_exp, out)
        }
        QLayer::Dense {
            weights,
            bias_q,
            out,
        } => {
            let (x, _shape, params) = expect_int(act, "dense_i8")?;
            let n = weights.shape[0];
            let m = weights.shape[1];
            if x.len() != n {
                return Err(TensorError::ShapeMismatch {
                    op: "dense_i8",
                    detail: format!("input len {} != weights rows {}", x.len(), n),
                });
            }
            let mut acc: Vec<i64> = bias_q.clone();
            for (i, &xv) in x.iter().enumerate() {
                if xv == 0 {
                    continue;
                }
                let xv = xv as i64;
                let row = &weights.data[i * m..][..m];
                for (a, &wv) in acc.iter_mut().zip(row) {
                    *a += xv * wv as i64;
                }
            }
            let acc_exp = params.exponent() as i32 + weights.params.exponent() as i32;
            emit(acc, vec![m], acc_exp, out)
        }
        QLayer::Relu => match act {
            Act::Int { data, shape, params } => Ok(Act::Int {
                data: data.iter().map(|&v| v.max(0)).collect(),
                shape,
                params,
            }),
            Act::Float(t) => Ok(Act::Float(crate::tensor::relu(&t)?)),
        },
        QLayer::Softmax => {
            let t = match act {
                Act::Float(t) => t,
                Act::Int { data, shape, params } => {
                    let vals = data.iter().map(|&v| v as f64 * params.scale()).collect();
                    Tensor::new(shape, vals)?
                }
            };
            Ok(Act::Float(crate::tensor::softmax(&t)?))
        }
        QLayer::MaxPool2d { window } => {
            let (x, shape, params) = expect_int(act, "max_pool2d_i8")?;
            let (h, w, c) = (shape[0], shape[1], shape[2]);
            let (ph, pw) = *window;
            let out_h = h / ph;
            let out_w = w / pw;
            let mut out = vec![i8::MIN; out_h * out_w * c];
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
            Ok(Act::Int {
                data: out,
                shape: vec![out_h, out_w, c],
                params,
            })
        }
        QLayer::GlobalAvgPool => {
            let (x, shape, params) = expect_int(act, "global_avg_pool_i8")?;
            let (h, w, c) = (shape[0], shape[1], shape[2]);
            let n = (h * w) as f64;
            let mut sums = vec![0i64; c];
            for px in x.chunks_exact(c) {
                for (s, &v) in sums.iter_mut().zip(px) {
                    *s += v as i64;
                }
            }
            let data = sums.iter().map(|&s| round_clamp_i8(s as f64 / n)).collect();
            Ok(Act::Int {
                data,
                shape: vec![c],
                params,
            })
        }
        QLayer::Flatten => match act {
            Act::Int { data, shape, params } => Ok(Act::Int {
                data,
                shape: vec![shape.iter().product()],
                params,
            }),
            Act::Float(t) => {
                let n = t.len();
                Ok(Act::Float(t.reshape(vec![n])?))
            }
        },
    }
}

/// Fraction of inputs where the float and INT8 models pick the same
/// head-0 class.
pub fn argmax_agreement(
    model: &ModelGraph,
    qmodel: &QuantizedModel,
    inputs: &[Tensor],
) -> Result<f64, ModelError> {
    if inputs.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut agree = 0usize;
    for input in inputs {
        let f = model.forward(input)?;
        let q = qmodel.forward(input)?;
        if argmax_tie_lowest(f[0].data()) == argmax_tie_lowest(q[0].data()) {
            agree += 1;
        }
    }
    Ok(agree as f64 / inputs.len() as f64)
}
