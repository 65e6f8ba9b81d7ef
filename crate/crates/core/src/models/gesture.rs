//! Gesture CNN training and inference.

use super::train::{init_weights, train_step, EarlyStop, Target};
use super::{
    argmax_tie_lowest, build_gesture_cnn, GestureClass, GestureWindow, ModelError, ModelGraph,
    ALL_GESTURES,
};
use crate::rng::{self, tags};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Options for [`train_gesture`]. Defaults follow the training protocol of
/// the gesture model: 300 epochs, learning rate 0.001, batch size 32.
#[derive(Debug, Clone)]
pub struct GestureTrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    /// Simulate INT8 precision in the forward pass while training.
    pub qat: bool,
    /// Stop early once the train split is fully learned. `None` always
    /// runs the full epoch budget.
    pub early_stop: Option<EarlyStop>,
}

impl Default for GestureTrainOptions {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 0.001,
            batch: 32,
            seed: 0,
            qat: false,
            early_stop: Some(EarlyStop::default()),
        }
    }
}

/// Train/test/val metrics of a gesture training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GestureMetrics {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    /// `confusion[actual][predicted]` over the test split.
    pub confusion: [[usize; 3]; 3],
    pub epochs_run: usize,
    pub final_loss: f64,
}

/// A dataset split 80/10/10 into train/test/val, stratified per class.
#[derive(Debug, Clone)]
pub struct GestureDataset {
    pub train: Vec<GestureWindow>,
    pub test: Vec<GestureWindow>,
    pub val: Vec<GestureWindow>,
}

impl GestureDataset {
    /// Stratified 80/10/10 split, shuffled deterministically by `seed`.
    pub fn split(windows: &[GestureWindow], seed: u64) -> Result<Self, ModelError> {
        if windows.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let mut rng = rng::stream_rng(seed, tags::SPLIT);
        let mut out = GestureDataset {
            train: Vec::new(),
            test: Vec::new(),
            val: Vec::new(),
        };
        for class in ALL_GESTURES {
            let mut idx: Vec<usize> = windows
                .iter()
                .enumerate()
                .filter(|(_, w)| w.label == Some(class))
                .map(|(i, _)| i)
                .collect();
            idx.shuffle(&mut rng);
            let n = idx.len();
            let n_train = n * 8 / 10;
            let n_test = n / 10;
            for (pos, &i) in idx.iter().enumerate() {
                let w = windows[i].clone();
                if pos < n_train {
                    out.train.push(w);
                } else if pos < n_train + n_test {
                    out.test.push(w);
                } else {
                    out.val.push(w);
                }
            }
        }
        for class in ALL_GESTURES {
            if !out.train.iter().any(|w| w.label == Some(class)) {
                return Err(ModelError::ClassMissingFromTrain(class));
            }
        }
        Ok(out)
    }
}

fn accuracy(model: &ModelGraph, set: &[GestureWindow]) -> Result<f64, ModelError> {
    if set.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for w in set {
        let (pred, _) = infer_gesture(model, w)?;
        if Some(pred) == w.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / set.len() as f64)
}

fn confusion(model: &ModelGraph, set: &[GestureWindow]) -> Result<[[usize; 3]; 3], ModelError> {
    let mut m = [[0usize; 3]; 3];
    for w in set {
        let (pred, _) = infer_gesture(model, w)?;
        if let Some(actual) = w.label {
            m[actual.id()][pred.id()] += 1;
        }
    }
    Ok(m)
}

/// Trains the gesture CNN on labelled windows (80/10/10 split) and returns
/// the trained model plus split metrics. Deterministic for a given seed.
pub fn train_gesture(
    windows: &[GestureWindow],
    opts: &GestureTrainOptions,
) -> Result<(ModelGraph, GestureMetrics), ModelError> {
    let split = GestureDataset::split(windows, opts.seed)?;
    let window_len = split.train[0].samples.len();
    let mut model = build_gesture_cnn(window_len)?;
    let mut init_rng = rng::stream_rng(opts.seed, tags::TRAIN_INIT);
    init_weights(&mut model, &mut init_rng);

    let inputs: Vec<(Tensor, Target)> = split
        .train
        .iter()
        .map(|w| {
            (
                w.to_model_input(),
                Target::Class(w.label.expect("train split is labelled").id()),
            )
        })
        .collect();

    let mut shuffle_rng = rng::stream_rng(opts.seed, tags::TRAIN_SHUFFLE);
    let mut dropout_rng = rng::stream_rng(opts.seed, tags::TRAIN_DROPOUT);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut epochs_run = 0;
    let mut final_loss = f64::NAN;

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
        epochs_run = epoch + 1;
        final_loss = loss_sum / batches.max(1) as f64;
        if let Some(stop) = opts.early_stop {
            if epochs_run >= stop.min_epochs
                && final_loss < stop.loss_threshold
                && accuracy(&model, &split.train)? == 1.0
            {
                break;
            }
        }
    }

    let metrics = GestureMetrics {
        train_accuracy: accuracy(&model, &split.train)?,
        test_accuracy: accuracy(&model, &split.test)?,
        val_accuracy: accuracy(&model, &split.val)?,
        confusion: confusion(&model, &split.test)?,
        epochs_run,
        final_loss,
    };
    Ok((model, metrics))
}

/// Classifies one window; ties break to the lowest class index.
pub fn infer_gesture(
    model: &ModelGraph,
    window: &GestureWindow,
) -> Result<(GestureClass, [f64; 3]), ModelError> {
    let out = model.forward(&window.to_model_input())?;
    let probs = out[0].data();
    let mut arr = [0.0; 3];
    arr.copy_from_slice(probs);
    let class = GestureClass::from_id(argmax_tie_lowest(probs)).expect("3-class head");
    Ok((class, arr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::gen_gesture;

    fn tiny_dataset(per_class: usize) -> Vec<GestureWindow> {
        let mut out = Vec::new();
        for class in ALL_GESTURES {
            for i in 0..per_class {
                out.push(gen_gesture(class, 1000 + i as u64));
            }
        }
        out
    }

    #[test]
    fn split_is_stratified_80_10_10() {
        let data = tiny_dataset(20);
        let split = GestureDataset::split(&data, 7).unwrap();
        assert_eq!(split.train.len(), 48);
        assert_eq!(split.test.len(), 6);
        assert_eq!(split.val.len(), 6);
        for class in ALL_GESTURES {
            assert_eq!(
                split.test.iter().filter(|w| w.label == Some(class)).count(),
                2
            );
        }
    }

    #[test]
    fn missing_class_rejected() {
        let mut data = tiny_dataset(10);
        data.retain(|w| w.label != Some(GestureClass::TiltLeft));
        let err = GestureDataset::split(&data, 7).unwrap_err();
        assert!(matches!(
            err,
            ModelError::ClassMissingFromTrain(GestureClass::TiltLeft)
        ));
    }

    #[test]
    fn memorizes_duplicated_windows() {
        // One distinct window per class, duplicated: training accuracy
        // must reach 100% (pure memorization).
        let mut data = Vec::new();
        for class in ALL_GESTURES {
            let w = gen_gesture(class, 42);
            for _ in 0..20 {
                data.push(w.clone());
            }
        }
        let opts = GestureTrainOptions {
            epochs: 60,
            seed: 3,
            ..Default::default()
        };
        let (model, metrics) = train_gesture(&data, &opts).unwrap();
        assert_eq!(metrics.train_accuracy, 1.0, "metrics: {metrics:?}");
        let split = GestureDataset::split(&data, 3).unwrap();
        assert_eq!(accuracy(&model, &split.train).unwrap(), 1.0);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let data = tiny_dataset(12);
        let opts = GestureTrainOptions {
            epochs: 2,
            early_stop: None,
            seed: 11,
            ..Default::default()
        };
        let (m1, k1) = train_gesture(&data, &opts).unwrap();
        let (m2, k2) = train_gesture(&data, &opts).unwrap();
        assert_eq!(m1, m2, "identical seeds must give identical weights");
        assert_eq!(k1.final_loss.to_bits(), k2.final_loss.to_bits());
    }
}
