//! Finite-difference gradient checks.
//!
//! Every layer type's backpropagated gradient is compared against central
//! finite differences (eps = 1e-4) on seeded small nets; the relative
//! error bound is 1e-3. The finite-difference oracle only uses the
//! forward pass, so it is independent of the backward implementation.

use graspstack_core::models::{
    build_grasp_force_net, init_weights, object_id_input, DropoutMasks, Layer, ModelGraph, Target,
};
use graspstack_core::tensor::{Padding, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_EPS: f64 = 1e-4;
const REL_TOL: f64 = 1e-3;
/// Gradients this small are compared absolutely (relative error is
/// meaningless against finite-difference noise near zero).
const ABS_FLOOR: f64 = 1e-7;

fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom < ABS_FLOOR {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

/// Scalar loss of the model under fixed dropout masks.
fn loss_of(model: &ModelGraph, input: &Tensor, target: Target, masks: &DropoutMasks) -> f64 {
    let (outs, _) = model.forward_train(input, masks, false).expect("forward");
    graspstack_core::models::sample_loss_and_grads(&outs, target)
        .expect("loss")
        .0
}

/// Addresses of every trainable parameter in the graph.
fn param_slots(model: &ModelGraph) -> Vec<(bool, usize, usize, bool, usize)> {
    // (in_trunk, head_idx, layer_idx, is_bias, elem_idx)
    let mut slots = Vec::new();
    let mut visit = |layers: &[Layer], in_trunk: bool, head_idx: usize| {
        for (li, layer) in layers.iter().enumerate() {
            let (w, b) = match layer {
                Layer::Conv2d { kernels, bias, .. } => (kernels.len(), bias.len()),
                Layer::Dense { weights, bias, .. } => (weights.len(), bias.len()),
                _ => continue,
            };
            for e in 0..w {
                slots.push((in_trunk, head_idx, li, false, e));
            }
            for e in 0..b {
                slots.push((in_trunk, head_idx, li, true, e));
            }
        }
    };
    visit(&model.trunk, true, 0);
    for (h, head) in model.heads.iter().enumerate() {
        visit(head, false, h);
    }
    slots
}

fn param_mut<'a>(
    model: &'a mut ModelGraph,
    slot: &(bool, usize, usize, bool, usize),
) -> &'a mut f64 {
    let (in_trunk, h, li, is_bias, e) = *slot;
    let layer = if in_trunk {
        &mut model.trunk[li]
    } else {
        &mut model.heads[h][li]
    };
    match layer {
        Layer::Conv2d { kernels, bias, .. } | Layer::Dense { weights: kernels, bias, .. } => {
            if is_bias {
                &mut bias.data_mut()[e]
            } else {
                &mut kernels.data_mut()[e]
            }
        }
        _ => unreachable!("slot addresses a parameter layer"),
    }
}

fn analytic_grad(
    model: &ModelGraph,
    input: &Tensor,
    target: Target,
    masks: &DropoutMasks,
    slot: &(bool, usize, usize, bool, usize),
) -> f64 {
    let (outs, tape) = model.forward_train(input, masks, false).expect("forward");
    let (_, head_grads) =
        graspstack_core::models::sample_loss_and_grads(&outs, target).expect("loss grads");
    let grads = model.backward(&tape, &head_grads).expect("backward");
    let (in_trunk, h, li, is_bias, e) = *slot;
    let pair = if in_trunk {
        grads.trunk_grad(li)
    } else {
        grads.head_grad(h, li)
    }
    .expect("parameter layer has gradients");
    if is_bias {
        pair.1.data()[e]
    } else {
        pair.0.data()[e]
    }
}

fn check_all_params(model: &ModelGraph, input: &Tensor, target: Target, masks: &DropoutMasks) {
    let slots = param_slots(model);
    assert!(!slots.is_empty());
    let mut worst = 0.0f64;
    for slot in &slots {
        let analytic = analytic_grad(model, input, target, masks, slot);
        let mut m = model.clone();
        *param_mut(&mut m, slot) += FD_EPS;
        let up = loss_of(&m, input, target, masks);
        let mut m = model.clone();
        *param_mut(&mut m, slot) -= FD_EPS;
        let down = loss_of(&m, input, target, masks);
        let numeric = (up - down) / (2.0 * FD_EPS);
        let err = rel_err(analytic, numeric);
        worst = worst.max(err);
        assert!(
            err <= REL_TOL,
            "gradient mismatch at {slot:?}: analytic {analytic:.9}, fd {numeric:.9}, rel {err:.2e}"
        );
    }
    eprintln!("checked {} params, worst rel err {worst:.2e}", slots.len());
}

fn random_input(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Conv (valid + strided-same) -> relu -> maxpool -> flatten -> dense ->
/// softmax with cross-entropy: the full CNN layer stack.
#[test]
fn cnn_stack_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut model = ModelGraph {
        input_shape: vec![7, 5, 2],
        trunk: vec![
            Layer::Conv2d {
                kernels: Tensor::zeros(vec![3, 2, 2, 4]),
                bias: Tensor::zeros(vec![4]),
                stride: (1, 1),
                padding: Padding::Valid,
                quant: None,
            },
            Layer::Relu,
            Layer::Conv2d {
                kernels: Tensor::zeros(vec![2, 2, 4, 3]),
                bias: Tensor::zeros(vec![3]),
                stride: (2, 1),
                padding: Padding::Same,
                quant: None,
            },
            Layer::Relu,
            Layer::MaxPool2d { window: (2, 1) },
            Layer::Flatten,
            Layer::Dense {
                weights: Tensor::zeros(vec![12, 3]),
                bias: Tensor::zeros(vec![3]),
                quant: None,
            },
            Layer::Softmax,
        ],
        heads: vec![vec![]],
    };
    model.validate().unwrap();
    init_weights(&mut model, &mut rng);
    let input = random_input(&mut rng, vec![7, 5, 2]);
    let masks = model.identity_dropout_masks().unwrap();
    check_all_params(&model, &input, Target::Class(1), &masks);
}

/// Dropout with a sampled (non-identity) mask held fixed for the step.
#[test]
fn dropout_gradients_match_finite_differences_with_fixed_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut model = ModelGraph {
        input_shape: vec![4, 3, 1],
        trunk: vec![
            Layer::Conv2d {
                kernels: Tensor::zeros(vec![2, 2, 1, 3]),
                bias: Tensor::zeros(vec![3]),
                stride: (1, 1),
                padding: Padding::Valid,
                quant: None,
            },
            Layer::Relu,
            Layer::Dropout { rate: 0.3 },
            Layer::Flatten,
            Layer::Dropout { rate: 0.3 },
            Layer::Dense {
                weights: Tensor::zeros(vec![18, 3]),
                bias: Tensor::zeros(vec![3]),
                quant: None,
            },
            Layer::Softmax,
        ],
        heads: vec![vec![]],
    };
    model.validate().unwrap();
    init_weights(&mut model, &mut rng);
    let input = random_input(&mut rng, vec![4, 3, 1]);
    let masks = model.sample_dropout_masks(&mut rng).unwrap();
    check_all_params(&model, &input, Target::Class(2), &masks);
}

/// The dual-head grasp/force topology: conv1x1, global average pooling,
/// parallel dense branches, softmax + linear heads, CE + MAE loss.
#[test]
fn dual_head_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut model = build_grasp_force_net(6).unwrap();
    init_weights(&mut model, &mut rng);
    let input = object_id_input(3, 6).unwrap();
    let masks = model.identity_dropout_masks().unwrap();
    check_all_params(
        &model,
        &input,
        Target::ClassAndForce {
            class: 2,
            force: 0.4,
        },
        &masks,
    );
}

/// A three-layer seeded net checked end to end (the canonical "random
/// small net" case), including global average pooling in the trunk.
#[test]
fn three_layer_net_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut model = ModelGraph {
        input_shape: vec![5, 4, 2],
        trunk: vec![
            Layer::Conv2d {
                kernels: Tensor::zeros(vec![2, 2, 2, 5]),
                bias: Tensor::zeros(vec![5]),
                stride: (1, 1),
                padding: Padding::Valid,
                quant: None,
            },
            Layer::Relu,
            Layer::GlobalAvgPool,
            Layer::Dense {
                weights: Tensor::zeros(vec![5, 4]),
                bias: Tensor::zeros(vec![4]),
                quant: None,
            },
            Layer::Relu,
            Layer::Dense {
                weights: Tensor::zeros(vec![4, 3]),
                bias: Tensor::zeros(vec![3]),
                quant: None,
            },
            Layer::Softmax,
        ],
        heads: vec![vec![]],
    };
    model.validate().unwrap();
    init_weights(&mut model, &mut rng);
    let input = random_input(&mut rng, vec![5, 4, 2]);
    let masks = model.identity_dropout_masks().unwrap();
    check_all_params(&model, &input, Target::Class(0), &masks);
}
