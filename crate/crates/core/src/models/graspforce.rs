//! Grasp/force network training and inference.

use super::train::{init_weights, train_step, Target};
use super::{
    argmax_tie_lowest, build_grasp_force_net, object_id_input, GraspDecision, GraspPattern,
    ModelError, ModelGraph,
};
use crate::objects::{ALL_CLASSES, NUM_CLASSES};
use crate::rng::{self, tags};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One training sample: object id, grasp label, normalized force target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspForceSample {
    pub object_id: usize,
    pub grasp: GraspPattern,
    pub force: f64,
}

/// Options for [`train_grasp_force`]. Defaults follow the training
/// protocol of the grasp/force model: 200 epochs at learning rate 0.002.
#[derive(Debug, Clone)]
pub struct GraspForceOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub qat: bool,
}

impl Default for GraspForceOptions {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.002,
            // The pronated class is a singleton between two pinch ids;
            // small batches give gradient descent enough update steps to
            // carve the boundary within the 200-epoch budget.
            batch: 4,
            seed: 0,
            qat: false,
        }
    }
}

/// Metrics of a grasp/force training run (test split).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraspForceMetrics {
    pub grasp_accuracy: f64,
    pub force_mae: f64,
    pub val_grasp_accuracy: f64,
    pub val_force_mae: f64,
    pub epochs_run: usize,
    pub final_loss: f64,
    /// Non-fatal data issues (e.g. conflicting grasp labels for one id).
    pub warnings: Vec<String>,
}

/// Synthesizes the canonical training set: `n` samples cycling over the
/// object table with uniform force noise in `[-noise, +noise]`.
pub fn make_grasp_force_dataset(n: usize, noise: f64, seed: u64) -> Vec<GraspForceSample> {
    let mut rng = rng::stream_rng(seed, tags::DATASET);
    (0..n)
        .map(|i| {
            let class = ALL_CLASSES[i % NUM_CLASSES];
            let props = class.properties();
            let jitter = if noise > 0.0 {
                rng.gen_range(-noise..=noise)
            } else {
                0.0
            };
            GraspForceSample {
                object_id: class.id(),
                grasp: props.grasp,
                force: (props.force + jitter).clamp(0.0, 1.0),
            }
        })
        .collect()
}

fn eval(
    model: &ModelGraph,
    set: &[GraspForceSample],
) -> Result<(f64, f64), ModelError> {
    if set.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut hits = 0usize;
    let mut abs_err = 0.0;
    for s in set {
        let d = infer_grasp_force(model, s.object_id)?;
        if d.pattern == s.grasp {
            hits += 1;
        }
        abs_err += (d.max_force - s.force).abs();
    }
    Ok((hits as f64 / set.len() as f64, abs_err / set.len() as f64))
}

/// Trains the dual-head grasp/force network on (id, grasp, force) triples
/// with an 80/10/10 split. Conflicting grasp labels for the same id are
/// reported as warnings; training proceeds.
pub fn train_grasp_force(
    samples: &[GraspForceSample],
    opts: &GraspForceOptions,
) -> Result<(ModelGraph, GraspForceMetrics), ModelError> {
    if samples.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut warnings = Vec::new();
    let mut by_id: BTreeMap<usize, GraspPattern> = BTreeMap::new();
    for s in samples {
        if s.object_id >= NUM_CLASSES {
            return Err(ModelError::BadObjectId {
                id: s.object_id,
                classes: NUM_CLASSES,
            });
        }
        match by_id.get(&s.object_id) {
            Some(&g) if g != s.grasp => {
                let w = format!(
                    "conflicting grasp labels for object id {}: {:?} vs {:?}",
                    s.object_id, g, s.grasp
                );
                if !warnings.contains(&w) {
                    warnings.push(w);
                }
            }
            None => {
                by_id.insert(s.object_id, s.grasp);
            }
            _ => {}
        }
    }
    for class in ALL_CLASSES {
        if !by_id.contains_key(&class.id()) {
            warnings.push(format!(
                "object id {} ({}) absent from dataset",
                class.id(),
                class.name()
            ));
        }
    }

    // Stratified-by-id 80/10/10 split.
    let mut rng_split = rng::stream_rng(opts.seed, tags::SPLIT);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut val = Vec::new();
    for class in ALL_CLASSES {
        let mut idx: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.object_id == class.id())
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng_split);
        let n = idx.len();
        let n_train = n * 8 / 10;
        let n_test = n / 10;
        for (pos, &i) in idx.iter().enumerate() {
            if pos < n_train {
                train.push(samples[i]);
            } else if pos < n_train + n_test {
                test.push(samples[i]);
            } else {
                val.push(samples[i]);
            }
        }
    }
    if train.is_empty() {
        return Err(ModelError::EmptyDataset);
    }

    let mut model = build_grasp_force_net(NUM_CLASSES)?;
    let mut init_rng = rng::stream_rng(opts.seed, tags::TRAIN_INIT);
    init_weights(&mut model, &mut init_rng);

    let inputs: Vec<(Tensor, Target)> = train
        .iter()
        .map(|s| {
            Ok((
                object_id_input(s.object_id, NUM_CLASSES)?,
                Target::ClassAndForce {
                    class: s.grasp.id(),
                    force: s.force,
                },
            ))
        })
        .collect::<Result<_, ModelError>>()?;

    let mut shuffle_rng = rng::stream_rng(opts.seed, tags::TRAIN_SHUFFLE);
    let mut dropout_rng = rng::stream_rng(opts.seed, tags::TRAIN_DROPOUT);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut final_loss = f64::NAN;
    let mut epochs_run = 0;
    for epoch in 0..opts.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(opts.batch.max(1)) {
            let batch: Vec<(Tensor, Target)> =
                chunk.iter().map(|&i| inputs[i].clone()).collect();
            let masks = model.sample_dropout_masks(&mut dropout_rng)?;
            loss_sum += train_step(&mut model, &batch, opts.lr, &masks, opts.qat)?;
            batches += 1;
        }
        final_loss = loss_sum / batches.max(1) as f64;
        epochs_run = epoch + 1;
    }

    let (grasp_accuracy, force_mae) = eval(&model, &test)?;
    let (val_grasp_accuracy, val_force_mae) = eval(&model, &val)?;
    Ok((
        model,
        GraspForceMetrics {
            grasp_accuracy,
            force_mae,
            val_grasp_accuracy,
            val_force_mae,
            epochs_run,
            final_loss,
            warnings,
        },
    ))
}

/// Predicts grasp pattern and normalized maximum force for an object id.
/// The force output is clamped to `[0, 1]`.
pub fn infer_grasp_force(model: &ModelGraph, object_id: usize) -> Result<GraspDecision, ModelError> {
    let input = object_id_input(object_id, NUM_CLASSES)?;
    let outs = model.forward(&input)?;
    let mut probs = [0.0; 3];
    probs.copy_from_slice(outs[0].data());
    let pattern = GraspPattern::from_id(argmax_tie_lowest(&probs)).expect("3-class head");
    Ok(GraspDecision {
        pattern,
        pattern_probs: probs,
        max_force: outs[1].data()[0].clamp(0.0, 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objects::ObjectClass;

    #[test]
    fn dataset_is_deterministic_and_clamped() {
        let a = make_grasp_force_dataset(600, 0.01, 5);
        let b = make_grasp_force_dataset(600, 0.01, 5);
        assert_eq!(a, b);
        for s in &a {
            assert!((0.0..=1.0).contains(&s.force));
            let base = ObjectClass::from_id(s.object_id).unwrap().properties();
            assert!((s.force - base.force).abs() <= 0.01 + 1e-12);
            assert_eq!(s.grasp, base.grasp);
        }
    }

    #[test]
    fn conflicting_labels_warn_but_train() {
        let mut data = make_grasp_force_dataset(300, 0.0, 1);
        data.push(GraspForceSample {
            object_id: 0,
            grasp: GraspPattern::Pinch, // ball is PowerGrip in the table
            force: 0.5,
        });
        let opts = GraspForceOptions {
            epochs: 1,
            ..Default::default()
        };
        let (_, metrics) = train_grasp_force(&data, &opts).unwrap();
        assert!(metrics
            .warnings
            .iter()
            .any(|w| w.contains("conflicting grasp labels")));
    }

    #[test]
    fn single_object_dataset_reaches_perfect_metrics() {
        let data: Vec<GraspForceSample> = (0..100)
            .map(|_| GraspForceSample {
                object_id: 2,
                grasp: GraspPattern::PowerGrip,
                force: 0.8,
            })
            .collect();
        let opts = GraspForceOptions {
            epochs: 300,
            seed: 2,
            ..Default::default()
        };
        let (model, metrics) = train_grasp_force(&data, &opts).unwrap();
        assert_eq!(metrics.grasp_accuracy, 1.0);
        assert!(metrics.force_mae < 0.02, "mae {}", metrics.force_mae);
        let d = infer_grasp_force(&model, 2).unwrap();
        assert_eq!(d.pattern, GraspPattern::PowerGrip);
    }

    #[test]
    fn bad_object_id_rejected() {
        let data = vec![GraspForceSample {
            object_id: 9,
            grasp: GraspPattern::Pinch,
            force: 0.5,
        }];
        assert!(matches!(
            train_grasp_force(&data, &GraspForceOptions::default()),
            Err(ModelError::BadObjectId { id: 9, .. })
        ));
    }
}
