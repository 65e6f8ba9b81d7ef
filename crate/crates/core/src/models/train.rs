//! Reverse-mode training machinery for [`ModelGraph`].
//!
//! A forward pass in training mode records a [`Tape`] of per-layer inputs;
//! replaying the tape backwards yields parameter gradients of the scalar
//! loss. The optimizer is plain mini-batch gradient descent. Dropout masks
//! are sampled once per step and shared across the batch, so a step's loss
//! is a deterministic differentiable function and gradients can be checked
//! against finite differences.
//!
//! Quantization-aware training is simulated as fake quantization: with
//! `qat` set, conv/dense weights and outputs pass through
//! quantize-then-dequantize in the forward pass, and gradients flow
//! straight through the rounding (gradients are taken with respect to the
//! quantized weights and applied to the float master copy).

use super::{Layer, ModelError, ModelGraph};
use crate::tensor::{
    self, calibrate_quant, cross_entropy, fake_quantize, mae, Tensor, TensorError,
};
use crate::tensor::{cross_entropy_backward, mae_backward};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Training target for one sample.
#[derive(Debug, Clone, Copy)]
pub enum Target {
    /// Single-head classifier: class index.
    Class(usize),
    /// Dual-head network: class index plus normalized force.
    ClassAndForce { class: usize, force: f64 },
}

/// Dropout masks for every `Dropout` layer of a graph, in trunk-then-heads
/// order. Mask values are already inverted-scaled (`0` or `1/(1-rate)`).
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    masks: Vec<Vec<f64>>,
}

/// Early-stopping rule for training loops: once at least `min_epochs` have
/// run and the mean epoch loss drops below `loss_threshold`, training stops
/// early if training-split accuracy is already perfect.
#[derive(Debug, Clone, Copy)]
pub struct EarlyStop {
    pub min_epochs: usize,
    pub loss_threshold: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            min_epochs: 5,
            loss_threshold: 0.05,
        }
    }
}

impl ModelGraph {
    fn dropout_shapes(&self) -> Result<Vec<usize>, TensorError> {
        let mut sizes = Vec::new();
        let mut shape = self.input_shape.clone();
        for layer in &self.trunk {
            shape = layer.output_shape(&shape)?;
            if matches!(layer, Layer::Dropout { .. }) {
                sizes.push(shape.iter().product());
            }
        }
        for head in &self.heads {
            let mut s = shape.clone();
            for layer in head {
                s = layer.output_shape(&s)?;
                if matches!(layer, Layer::Dropout { .. }) {
                    sizes.push(s.iter().product());
                }
            }
        }
        Ok(sizes)
    }

    /// Samples one step's dropout masks.
    pub fn sample_dropout_masks(&self, rng: &mut ChaCha8Rng) -> Result<DropoutMasks, TensorError> {
        let rates = self.dropout_rates();
        let masks = self
            .dropout_shapes()?
            .into_iter()
            .zip(rates)
            .map(|(n, rate)| {
                let keep = 1.0 - rate;
                (0..n)
                    .map(|_| {
                        if rng.gen::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(DropoutMasks { masks })
    }

    /// All-ones masks (makes training-mode forward equal inference).
    pub fn identity_dropout_masks(&self) -> Result<DropoutMasks, TensorError> {
        let masks = self
            .dropout_shapes()?
            .into_iter()
            .map(|n| vec![1.0; n])
            .collect();
        Ok(DropoutMasks { masks })
    }

    fn dropout_rates(&self) -> Vec<f64> {
        self.trunk
            .iter()
            .chain(self.heads.iter().flatten())
            .filter_map(|l| match l {
                Layer::Dropout { rate } => Some(*rate),
                _ => None,
            })
            .collect()
    }
}

/// Cached activations of one training-mode forward pass.
#[derive(Debug)]
pub struct Tape {
    trunk: Vec<LayerRecord>,
    heads: Vec<Vec<LayerRecord>>,
    trunk_out: Tensor,
}

#[derive(Debug)]
struct LayerRecord {
    /// Layer input.
    input: Tensor,
    /// Layer output (needed by softmax backward).
    output: Tensor,
    /// Effective weights used in the forward pass (differs from the float
    /// master under QAT fake quantization).
    eff_weights: Option<Tensor>,
    /// Dropout mask applied, if this is a dropout layer.
    mask: Option<Vec<f64>>,
}

/// Per-layer parameter gradients, aligned with the graph's layer order.
#[derive(Debug, Clone)]
pub struct Gradients {
    trunk: Vec<Option<(Tensor, Tensor)>>,
    heads: Vec<Vec<Option<(Tensor, Tensor)>>>,
}

impl Gradients {
    fn zeros_like(model: &ModelGraph) -> Self {
        let zero = |layers: &[Layer]| {
            layers
                .iter()
                .map(|l| match l {
                    Layer::Conv2d { kernels, bias, .. } => {
                        Some((Tensor::zeros(kernels.shape().to_vec()), Tensor::zeros(bias.shape().to_vec())))
                    }
                    Layer::Dense { weights, bias, .. } => {
                        Some((Tensor::zeros(weights.shape().to_vec()), Tensor::zeros(bias.shape().to_vec())))
                    }
                    _ => None,
                })
                .collect::<Vec<_>>()
        };
        Gradients {
            trunk: zero(&model.trunk),
            heads: model.heads.iter().map(|h| zero(h)).collect(),
        }
    }

    /// Gradient for trunk layer `i`, if it has parameters.
    pub fn trunk_grad(&self, i: usize) -> Option<&(Tensor, Tensor)> {
        self.trunk.get(i).and_then(|g| g.as_ref())
    }

    /// Gradient for layer `i` of head `h`.
    pub fn head_grad(&self, h: usize, i: usize) -> Option<&(Tensor, Tensor)> {
        self.heads.get(h).and_then(|hs| hs.get(i)).and_then(|g| g.as_ref())
    }
}

fn forward_layer_train(
    layer: &Layer,
    x: Tensor,
    masks: &mut std::slice::Iter<'_, Vec<f64>>,
    qat: bool,
) -> Result<LayerRecord, TensorError> {
    let mut eff_weights = None;
    let mut mask = None;
    let output = match layer {
        Layer::Conv2d {
            kernels,
            bias,
            stride,
            padding,
            ..
        } => {
            let kq;
            let k = if qat {
                kq = fake_quantize(kernels, calibrate_quant(&[kernels])?);
                eff_weights = Some(kq.clone());
                &kq
            } else {
                kernels
            };
            let out = tensor::conv2d(&x, k, bias, *stride, *padding)?;
            if qat {
                fake_quantize(&out, calibrate_quant(&[&out])?)
            } else {
                out
            }
        }
        Layer::Dense { weights, bias, .. } => {
            let wq;
            let w = if qat {
                wq = fake_quantize(weights, calibrate_quant(&[weights])?);
                eff_weights = Some(wq.clone());
                &wq
            } else {
                weights
            };
            let out = tensor::dense(&x, w, bias)?;
            if qat {
                fake_quantize(&out, calibrate_quant(&[&out])?)
            } else {
                out
            }
        }
        Layer::Relu => tensor::relu(&x)?,
        Layer::Softmax => tensor::softmax(&x)?,
        Layer::MaxPool2d { window } => tensor::max_pool2d(&x, *window)?,
        Layer::GlobalAvgPool => tensor::global_avg_pool(&x)?,
        Layer::Flatten => x.reshape(vec![x.len()])?,
        Layer::Dropout { .. } => {
            let m = masks.next().ok_or(TensorError::ShapeMismatch {
                op: "dropout",
                detail: "mask count does not match dropout layer count".into(),
            })?;
            if m.len() != x.len() {
                return Err(TensorError::ShapeMismatch {
                    op: "dropout",
                    detail: format!("mask len {} != activation len {}", m.len(), x.len()),
                });
            }
            let data = x.data().iter().zip(m).map(|(&v, &k)| v * k).collect();
            mask = Some(m.clone());
            Tensor::new(x.shape().to_vec(), data)?
        }
    };
    Ok(LayerRecord {
        input: x,
        output,
        eff_weights,
        mask,
    })
}

impl ModelGraph {
    /// Training-mode forward pass: applies dropout masks (and fake
    /// quantization when `qat`), recording a [`Tape`].
    pub fn forward_train(
        &self,
        input: &Tensor,
        masks: &DropoutMasks,
        qat: bool,
    ) -> Result<(Vec<Tensor>, Tape), ModelError> {
        if input.shape() != self.input_shape {
            return Err(ModelError::InputShape {
                got: input.shape().to_vec(),
                want: self.input_shape.clone(),
            });
        }
        let mut mask_iter = masks.masks.iter();
        let mut trunk_records = Vec::with_capacity(self.trunk.len());
        let mut x = input.clone();
        for layer in &self.trunk {
            let rec = forward_layer_train(layer, x, &mut mask_iter, qat)?;
            x = rec.output.clone();
            trunk_records.push(rec);
        }
        let trunk_out = x;
        let mut heads_records = Vec::with_capacity(self.heads.len());
        let mut outs = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let mut recs = Vec::with_capacity(head.len());
            let mut h = trunk_out.clone();
            for layer in head {
                let rec = forward_layer_train(layer, h, &mut mask_iter, qat)?;
                h = rec.output.clone();
                recs.push(rec);
            }
            outs.push(h);
            heads_records.push(recs);
        }
        Ok((
            outs,
            Tape {
                trunk: trunk_records,
                heads: heads_records,
                trunk_out,
            },
        ))
    }

    /// Replays the tape backwards from per-head output gradients, producing
    /// parameter gradients.
    pub fn backward(&self, tape: &Tape, head_grads: &[Tensor]) -> Result<Gradients, ModelError> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_accumulate(tape, head_grads, &mut grads)?;
        Ok(grads)
    }

    /// Replays the tape backwards, adding this sample's parameter
    /// gradients into an accumulator (avoids per-sample allocations when
    /// summing over a batch).
    pub fn backward_accumulate(
        &self,
        tape: &Tape,
        head_grads: &[Tensor],
        grads: &mut Gradients,
    ) -> Result<(), ModelError> {
        assert_eq!(head_grads.len(), self.heads.len(), "one gradient per head");
        let mut dtrunk_out = Tensor::zeros(tape.trunk_out.shape().to_vec());

        for (h, (head, recs)) in self.heads.iter().zip(&tape.heads).enumerate() {
            let mut g = head_grads[h].clone();
            for (i, (layer, rec)) in head.iter().zip(recs).enumerate().rev() {
                g = backward_layer_acc(layer, rec, &g, grads.heads[h][i].as_mut(), true)?
                    .expect("dx requested");
            }
            for (a, b) in dtrunk_out.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }

        let mut g = dtrunk_out;
        for (i, (layer, rec)) in self.trunk.iter().zip(&tape.trunk).enumerate().rev() {
            // The first layer's input gradient has no consumer.
            let want_dx = i > 0;
            match backward_layer_acc(layer, rec, &g, grads.trunk[i].as_mut(), want_dx)? {
                Some(dx) => g = dx,
                None => break,
            }
        }
        Ok(())
    }

    /// Gradient-descent update: `p -= lr * scale * grad`.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64, scale: f64) {
        fn update(layers: &mut [Layer], grads: &[Option<(Tensor, Tensor)>], step: f64) {
            for (layer, grad) in layers.iter_mut().zip(grads) {
                let Some((gw, gb)) = grad else { continue };
                match layer {
                    Layer::Conv2d { kernels, bias, .. } => {
                        for (p, g) in kernels.data_mut().iter_mut().zip(gw.data()) {
                            *p -= step * g;
                        }
                        for (p, g) in bias.data_mut().iter_mut().zip(gb.data()) {
                            *p -= step * g;
                        }
                    }
                    Layer::Dense { weights, bias, .. } => {
                        for (p, g) in weights.data_mut().iter_mut().zip(gw.data()) {
                            *p -= step * g;
                        }
                        for (p, g) in bias.data_mut().iter_mut().zip(gb.data()) {
                            *p -= step * g;
                        }
                    }
                    _ => {}
                }
            }
        }
        let step = lr * scale;
        update(&mut self.trunk, &grads.trunk, step);
        for (head, hgrads) in self.heads.iter_mut().zip(&grads.heads) {
            update(head, hgrads, step);
        }
    }
}

fn backward_layer_acc(
    layer: &Layer,
    rec: &LayerRecord,
    dout: &Tensor,
    acc: Option<&mut (Tensor, Tensor)>,
    want_dx: bool,
) -> Result<Option<Tensor>, TensorError> {
    match layer {
        Layer::Conv2d {
            kernels,
            stride,
            padding,
            ..
        } => {
            let k = rec.eff_weights.as_ref().unwrap_or(kernels);
            let (dk, db) = acc.expect("conv layer has a gradient slot");
            tensor::conv2d_backward_acc(&rec.input, k, *stride, *padding, dout, dk, db, want_dx)
        }
        Layer::Dense { weights, .. } => {
            let w = rec.eff_weights.as_ref().unwrap_or(weights);
            let (dw, db) = acc.expect("dense layer has a gradient slot");
            tensor::dense_backward_acc(&rec.input, w, dout, dw, db, want_dx)
        }
        Layer::Relu => Ok(Some(tensor::relu_backward(&rec.input, dout)?)),
        Layer::Softmax => Ok(Some(tensor::softmax_backward(&rec.output, dout)?)),
        Layer::MaxPool2d { window } => {
            Ok(Some(tensor::max_pool2d_backward(&rec.input, *window, dout)?))
        }
        Layer::GlobalAvgPool => Ok(Some(tensor::global_avg_pool_backward(
            rec.input.shape(),
            dout,
        )?)),
        Layer::Flatten => Ok(Some(dout.reshape(rec.input.shape().to_vec())?)),
        Layer::Dropout { .. } => {
            let m = rec.mask.as_ref().expect("dropout record has mask");
            let data = dout.data().iter().zip(m).map(|(&g, &k)| g * k).collect();
            Ok(Some(Tensor::new(dout.shape().to_vec(), data)?))
        }
    }
}

/// Loss and per-head output gradients for one sample.
pub fn sample_loss_and_grads(
    outs: &[Tensor],
    target: Target,
) -> Result<(f64, Vec<Tensor>), TensorError> {
    match target {
        Target::Class(label) => {
            let loss = cross_entropy(&outs[0], label)?;
            Ok((loss, vec![cross_entropy_backward(&outs[0], label)?]))
        }
        Target::ClassAndForce { class, force } => {
            let ce = cross_entropy(&outs[0], class)?;
            let target_t = Tensor::from_vec(vec![force]);
            let reg = mae(&outs[1], &target_t)?;
            Ok((
                ce + reg,
                vec![
                    cross_entropy_backward(&outs[0], class)?,
                    mae_backward(&outs[1], &target_t)?,
                ],
            ))
        }
    }
}

/// One mini-batch gradient-descent step.
///
/// Returns the pre-update mean loss. A non-finite loss aborts the step
/// without touching the parameters. With `lr == 0` the parameters are
/// left unchanged and only the loss is reported.
pub fn train_step(
    model: &mut ModelGraph,
    batch: &[(Tensor, Target)],
    lr: f64,
    masks: &DropoutMasks,
    qat: bool,
) -> Result<f64, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut total = Gradients::zeros_like(model);
    let mut loss_sum = 0.0;
    for (input, target) in batch {
        let (outs, tape) = model.forward_train(input, masks, qat)?;
        let (loss, head_grads) = sample_loss_and_grads(&outs, *target)?;
        loss_sum += loss;
        model.backward_accumulate(&tape, &head_grads, &mut total)?;
    }
    let mean_loss = loss_sum / batch.len() as f64;
    if !mean_loss.is_finite() {
        return Err(ModelError::Tensor(TensorError::NonFiniteLoss));
    }
    model.apply_gradients(&total, lr, 1.0 / batch.len() as f64);
    Ok(mean_loss)
}

/// He-uniform initialization of every conv/dense weight tensor; biases
/// draw from a small uniform band so ReLU breakpoints spread across the
/// input domain instead of piling up at zero (with all-zero biases the
/// stack is piecewise-linear with a single knee and gradient descent
/// escapes it very slowly). Deterministic for a given RNG state.
pub fn init_weights(model: &mut ModelGraph, rng: &mut ChaCha8Rng) {
    const BIAS_BAND: f64 = 0.5;
    for layer in model
        .trunk
        .iter_mut()
        .chain(model.heads.iter_mut().flatten())
    {
        match layer {
            Layer::Conv2d { kernels, bias, .. } => {
                let s = kernels.shape();
                let fan_in = (s[0] * s[1] * s[2]) as f64;
                let limit = (6.0 / fan_in).sqrt();
                for v in kernels.data_mut() {
                    *v = rng.gen_range(-limit..limit);
                }
                for v in bias.data_mut() {
                    *v = rng.gen_range(-BIAS_BAND..BIAS_BAND);
                }
            }
            Layer::Dense { weights, bias, .. } => {
                let fan_in = weights.shape()[0] as f64;
                let limit = (6.0 / fan_in).sqrt();
                for v in weights.data_mut() {
                    *v = rng.gen_range(-limit..limit);
                }
                for v in bias.data_mut() {
                    *v = rng.gen_range(-BIAS_BAND..BIAS_BAND);
                }
            }
            _ => {}
        }
    }
}
