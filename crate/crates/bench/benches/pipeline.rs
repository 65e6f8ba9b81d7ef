//! Benchmarks for the compute-heavy paths: tensor kernels, training
//! steps, INT8 vs float inference, NMS and the episode tick loop.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use graspstack_core::controller::{run_episode, EpisodeModels};
use graspstack_core::detection::{nms, BBox, Detection};
use graspstack_core::models::{
    build_gesture_cnn, infer_gesture, init_weights, make_grasp_force_dataset, train_grasp_force,
    train_step, GraspForceOptions, ModelGraph, QuantizedModel, Target,
};
use graspstack_core::plant::{
    gen_gesture, plant_step, HandState, PlantConfig, SceneObject, ServoCommand,
};
use graspstack_core::scenario::Scenario;
use graspstack_core::tensor::{conv2d, Padding, Tensor};
use graspstack_core::{GestureClass, ObjectClass};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn seeded_gesture_model() -> ModelGraph {
    // A seeded (untrained) CNN is representative for kernel throughput.
    let mut model = build_gesture_cnn(60).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    init_weights(&mut model, &mut rng);
    model
}

fn bench_conv2d(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let input = random_tensor(&mut rng, vec![52, 3, 64]);
    let kernels = random_tensor(&mut rng, vec![3, 2, 64, 128]);
    let bias = random_tensor(&mut rng, vec![128]);
    c.bench_function("conv2d 52x3x64 -> 128", |b| {
        b.iter(|| conv2d(black_box(&input), &kernels, &bias, (1, 1), Padding::Valid).unwrap())
    });
}

fn bench_gesture_inference(c: &mut Criterion) {
    let model = seeded_gesture_model();
    let window = gen_gesture(GestureClass::TiltLeft, 3);
    c.bench_function("gesture cnn forward", |b| {
        b.iter(|| infer_gesture(black_box(&model), &window).unwrap())
    });

    let calib: Vec<Tensor> = (0..8)
        .map(|i| gen_gesture(GestureClass::TiltRight, i).to_model_input())
        .collect();
    let qmodel = QuantizedModel::from_model(&model, &calib).unwrap();
    let input = window.to_model_input();
    c.bench_function("gesture cnn forward int8", |b| {
        b.iter(|| qmodel.forward(black_box(&input)).unwrap())
    });
}

fn bench_train_step(c: &mut Criterion) {
    let mut model = seeded_gesture_model();
    let masks = model.identity_dropout_masks().unwrap();
    let batch: Vec<(Tensor, Target)> = (0..4)
        .map(|i| {
            (
                gen_gesture(GestureClass::NoAction, i).to_model_input(),
                Target::Class(2),
            )
        })
        .collect();
    c.bench_function("gesture train step (batch 4)", |b| {
        b.iter(|| train_step(black_box(&mut model), &batch, 0.001, &masks, false).unwrap())
    });
}

fn bench_nms(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dets: Vec<Detection> = (0..100)
        .map(|_| Detection {
            class_id: rng.gen_range(0..6),
            confidence: rng.gen_range(0.0..1.0),
            bbox: BBox {
                cx: rng.gen_range(0.1..0.9),
                cy: rng.gen_range(0.1..0.9),
                w: rng.gen_range(0.02..0.3),
                h: rng.gen_range(0.02..0.3),
            },
        })
        .collect();
    c.bench_function("nms 100 boxes", |b| {
        b.iter(|| nms(black_box(&dets), 0.45).unwrap())
    });
}

fn bench_plant_step(c: &mut Criterion) {
    let cfg = PlantConfig::default();
    let obj = SceneObject::from_class(ObjectClass::Bottle, 80.0);
    let cmd = ServoCommand {
        target: [1.0; 3],
        force_ceiling: [0.8; 3],
    };
    c.bench_function("plant full close (150 steps)", |b| {
        b.iter(|| {
            let mut hand = HandState::default();
            for _ in 0..150 {
                plant_step(&mut hand, black_box(&cmd), Some(&obj), 10.0, &cfg);
            }
            hand
        })
    });
}

fn bench_episode(c: &mut Criterion) {
    // Full pipeline with a quickly trained grasp net; the gesture net is
    // seeded but structurally identical, so tick cost is representative.
    let data = make_grasp_force_dataset(600, 0.01, 0);
    let (grasp, _) = train_grasp_force(
        &data,
        &GraspForceOptions {
            epochs: 50,
            ..Default::default()
        },
    )
    .unwrap();
    let models = EpisodeModels {
        gesture: seeded_gesture_model(),
        grasp,
    };
    let mut scenario = Scenario::canonical_bottle();
    scenario.max_duration_ms = 4000; // bounded run for benching
    c.bench_function("episode 4s sim", |b| {
        b.iter(|| run_episode(black_box(&scenario), &models, None).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_conv2d, bench_gesture_inference, bench_train_step, bench_nms, bench_plant_step, bench_episode
}
criterion_main!(benches);
