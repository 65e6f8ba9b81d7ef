//! Object-detection post-processing: YOLO head decoding, greedy NMS,
//! mAP@0.5 evaluation and the bbox-size target-selection hierarchy.
//!
//! Boxes are `(cx, cy, w, h)` in normalized image coordinates. Decode
//! follows the v5/v7-family convention: `2σ(t) - 0.5` center offsets and
//! squared doubled-sigmoid sizes against per-anchor pixel priors.

use crate::objects::NUM_CLASSES;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("yolo head contains non-finite raw scores")]
    NonFiniteScores,
    #[error("yolo head grid/anchor layout mismatch: {0}")]
    BadHeadLayout(String),
    #[error("confidence threshold {0} outside [0,1]")]
    BadThreshold(f64),
    #[error("iou threshold {0} outside (0,1]")]
    BadIouThreshold(f64),
    #[error("empty ground-truth set: mAP undefined")]
    EmptyGroundTruth,
    #[error("class id {0} outside the {n}-class vocabulary", n = NUM_CLASSES)]
    BadClassId(u8),
}

/// Axis-aligned box: center, width, height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Intersection-over-union of two boxes; 0 for disjoint or zero-area boxes.
///
/// Areas derive from the same corner arithmetic as the intersection, so
/// identical boxes give exactly 1.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ax0 = a.cx - a.w / 2.0;
    let ax1 = a.cx + a.w / 2.0;
    let ay0 = a.cy - a.h / 2.0;
    let ay1 = a.cy + a.h / 2.0;
    let bx0 = b.cx - b.w / 2.0;
    let bx1 = b.cx + b.w / 2.0;
    let by0 = b.cy - b.h / 2.0;
    let by1 = b.cy + b.h / 2.0;
    let area_a = (ax1 - ax0) * (ay1 - ay0);
    let area_b = (bx1 - bx0) * (by1 - by0);
    if area_a <= 0.0 || area_b <= 0.0 {
        return 0.0;
    }
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// One detected object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_id: u8,
    pub confidence: f64,
    pub bbox: BBox,
}

/// A detection with a stable id assigned by its producer (the stub
/// detector uses scene-object indices), so selection state survives
/// re-detection across frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackedDetection {
    pub id: u32,
    #[serde(flatten)]
    pub detection: Detection,
}

/// Ground-truth annotation for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: u32,
    pub class_id: u8,
    pub bbox: BBox,
}

/// Raw single-scale YOLO head: `G x G x A x (5 + classes)` scores
/// (tx, ty, tw, th, objectness, class logits) with per-anchor pixel priors.
#[derive(Debug, Clone)]
pub struct YoloHead {
    pub grid: usize,
    /// Anchor (width, height) priors in pixels.
    pub anchors: Vec<(f64, f64)>,
    /// Network input size in pixels.
    pub input_size: f64,
    /// Raw scores, row-major over `[gy][gx][anchor][5 + classes]`.
    pub scores: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl YoloHead {
    pub fn stride(&self) -> usize {
        5 + NUM_CLASSES
    }

    pub fn expected_len(&self) -> usize {
        self.grid * self.grid * self.anchors.len() * self.stride()
    }
}

/// Decodes a YOLO head into detections above `conf_threshold`.
///
/// Per cell `(i, j)` and anchor `a`:
/// `bx = (2σ(tx) - 0.5 + j) / G`, `by = (2σ(ty) - 0.5 + i) / G`,
/// `bw = (2σ(tw))² · aw / input_size` (likewise `bh`), and
/// `confidence = σ(obj) · max_c σ(class_c)`. Centers are clamped to
/// `[0,1]`, sizes to `(0,1]`.
pub fn decode_yolo(head: &YoloHead, conf_threshold: f64) -> Result<Vec<Detection>, DetectionError> {
    if !(0.0..=1.0).contains(&conf_threshold) {
        return Err(DetectionError::BadThreshold(conf_threshold));
    }
    if head.scores.len() != head.expected_len() {
        return Err(DetectionError::BadHeadLayout(format!(
            "{} scores for grid {} with {} anchors (expected {})",
            head.scores.len(),
            head.grid,
            head.anchors.len(),
            head.expected_len()
        )));
    }
    if head.anchors.is_empty() {
        return Err(DetectionError::BadHeadLayout("no anchors".into()));
    }
    if head.scores.iter().any(|v| !v.is_finite()) {
        return Err(DetectionError::NonFiniteScores);
    }

    let g = head.grid;
    let stride = head.stride();
    let mut out = Vec::new();
    for i in 0..g {
        for j in 0..g {
            for (a, &(aw, ah)) in head.anchors.iter().enumerate() {
                let base = ((i * g + j) * head.anchors.len() + a) * stride;
                let s = &head.scores[base..base + stride];
                let bx = (2.0 * sigmoid(s[0]) - 0.5 + j as f64) / g as f64;
                let by = (2.0 * sigmoid(s[1]) - 0.5 + i as f64) / g as f64;
                let bw = (2.0 * sigmoid(s[2])).powi(2) * aw / head.input_size;
                let bh = (2.0 * sigmoid(s[3])).powi(2) * ah / head.input_size;
                let obj = sigmoid(s[4]);
                let mut best_class = 0usize;
                let mut best_score = f64::NEG_INFINITY;
                for (c, &logit) in s[5..].iter().enumerate() {
                    if logit > best_score {
                        best_score = logit;
                        best_class = c;
                    }
                }
                let confidence = obj * sigmoid(best_score);
                if confidence < conf_threshold {
                    continue;
                }
                out.push(Detection {
                    class_id: best_class as u8,
                    confidence,
                    bbox: BBox {
                        cx: bx.clamp(0.0, 1.0),
                        cy: by.clamp(0.0, 1.0),
                        w: bw.clamp(f64::MIN_POSITIVE, 1.0),
                        h: bh.clamp(f64::MIN_POSITIVE, 1.0),
                    },
                });
            }
        }
    }
    Ok(out)
}

/// Total order used to rank detections: confidence descending, ties by
/// lower class id then lower `cx` (then `cy`, `w`, `h` for determinism).
fn rank_order(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.confidence
        .partial_cmp(&a.confidence)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.class_id.cmp(&b.class_id))
        .then(a.bbox.cx.partial_cmp(&b.bbox.cx).unwrap_or(std::cmp::Ordering::Equal))
        .then(a.bbox.cy.partial_cmp(&b.bbox.cy).unwrap_or(std::cmp::Ordering::Equal))
        .then(a.bbox.w.partial_cmp(&b.bbox.w).unwrap_or(std::cmp::Ordering::Equal))
        .then(a.bbox.h.partial_cmp(&b.bbox.h).unwrap_or(std::cmp::Ordering::Equal))
}

/// Greedy per-class non-maximum suppression.
///
/// Detections are ranked by [`rank_order`]; a box is kept iff its IoU with
/// every already-kept box of the same class is below `iou_threshold`.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Result<Vec<Detection>, DetectionError> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(DetectionError::BadIouThreshold(iou_threshold));
    }
    let mut sorted: Vec<Detection> = dets.to_vec();
    sorted.sort_by(rank_order);
    let mut kept: Vec<Detection> = Vec::new();
    for d in sorted {
        let suppressed = kept
            .iter()
            .any(|k| k.class_id == d.class_id && iou(&k.bbox, &d.bbox) >= iou_threshold);
        if !suppressed {
            kept.push(d);
        }
    }
    Ok(kept)
}

/// All-point interpolated average precision from ranked (tp, fp) flags.
fn average_precision(flags: &[bool], npos: usize) -> f64 {
    if npos == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(flags.len()); // (recall, precision)
    for &is_tp in flags {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        points.push((
            tp as f64 / npos as f64,
            tp as f64 / (tp + fp) as f64,
        ));
    }
    // Precision envelope: running max from the right.
    let mut envelope = points.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i].1 = envelope[i].1.max(envelope[i + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &(r, p) in &envelope {
        if r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = r;
        }
    }
    ap
}

/// Mean average precision at the given IoU threshold (default protocol:
/// 0.5). Predictions are ranked per class by confidence and greedily
/// matched to the unmatched ground truth of the same image with the
/// highest IoU at or above the threshold; mAP averages AP over the classes
/// present in the ground truth.
pub fn evaluate_map(
    preds: &[(u32, Detection)],
    gts: &[GroundTruth],
    iou_thresh: f64,
) -> Result<f64, DetectionError> {
    if gts.is_empty() {
        return Err(DetectionError::EmptyGroundTruth);
    }
    for gt in gts {
        if gt.class_id as usize >= NUM_CLASSES {
            return Err(DetectionError::BadClassId(gt.class_id));
        }
    }
    let classes: Vec<u8> = {
        let mut cs: Vec<u8> = gts.iter().map(|g| g.class_id).collect();
        cs.sort_unstable();
        cs.dedup();
        cs
    };
    let mut ap_sum = 0.0;
    for &class in &classes {
        let npos = gts.iter().filter(|g| g.class_id == class).count();
        let mut ranked: Vec<(u32, Detection)> = preds
            .iter()
            .filter(|(_, d)| d.class_id == class)
            .cloned()
            .collect();
        ranked.sort_by(|(ia, a), (ib, b)| rank_order(a, b).then(ia.cmp(ib)));

        let gt_indices: Vec<usize> = gts
            .iter()
            .enumerate()
            .filter(|(_, g)| g.class_id == class)
            .map(|(i, _)| i)
            .collect();
        let mut matched: HashSet<usize> = HashSet::new();
        let mut flags = Vec::with_capacity(ranked.len());
        for (img, det) in &ranked {
            let mut best: Option<(usize, f64)> = None;
            for &gi in &gt_indices {
                if matched.contains(&gi) || gts[gi].image_id != *img {
                    continue;
                }
                let ov = iou(&det.bbox, &gts[gi].bbox);
                if ov >= iou_thresh && best.is_none_or(|(_, b)| ov > b) {
                    best = Some((gi, ov));
                }
            }
            match best {
                Some((gi, _)) => {
                    matched.insert(gi);
                    flags.push(true);
                }
                None => flags.push(false),
            }
        }
        ap_sum += average_precision(&flags, npos);
    }
    Ok(ap_sum / classes.len() as f64)
}

/// Picks the grasp target: the non-rejected detection with the largest
/// bbox area; ties go to the bbox center closest to the image center,
/// then to the lowest id. Returns `None` when nothing selectable remains.
pub fn select_target<'a>(
    dets: &'a [TrackedDetection],
    rejected: &HashSet<u32>,
) -> Option<&'a TrackedDetection> {
    dets.iter()
        .filter(|d| !rejected.contains(&d.id))
        .min_by(|a, b| {
            let area_a = a.detection.bbox.area();
            let area_b = b.detection.bbox.area();
            let center = |d: &TrackedDetection| {
                let dx = d.detection.bbox.cx - 0.5;
                let dy = d.detection.bbox.cy - 0.5;
                dx * dx + dy * dy
            };
            area_b
                .partial_cmp(&area_a)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(
                    center(a)
                        .partial_cmp(&center(b))
                        .unwrap_or(std::cmp::Ordering::Equal),
                )
                .then(a.id.cmp(&b.id))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn det(class_id: u8, confidence: f64, cx: f64, cy: f64, w: f64, h: f64) -> Detection {
        Detection {
            class_id,
            confidence,
            bbox: BBox { cx, cy, w, h },
        }
    }

    #[test]
    fn iou_identical_and_disjoint() {
        let a = BBox {
            cx: 0.5,
            cy: 0.5,
            w: 0.2,
            h: 0.2,
        };
        assert_eq!(iou(&a, &a), 1.0);
        let b = BBox {
            cx: 0.9,
            cy: 0.9,
            w: 0.1,
            h: 0.1,
        };
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_offset_squares_is_one_seventh() {
        // Centers (1,1) and (2,2), both 2x2: intersection 1, union 7.
        let a = BBox {
            cx: 1.0,
            cy: 1.0,
            w: 2.0,
            h: 2.0,
        };
        let b = BBox {
            cx: 2.0,
            cy: 2.0,
            w: 2.0,
            h: 2.0,
        };
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn iou_zero_area_box_is_zero() {
        let a = BBox {
            cx: 0.5,
            cy: 0.5,
            w: 0.0,
            h: 0.2,
        };
        let b = BBox {
            cx: 0.5,
            cy: 0.5,
            w: 0.2,
            h: 0.2,
        };
        assert_eq!(iou(&a, &b), 0.0);
    }

    fn zero_head() -> YoloHead {
        let grid = 8;
        let anchors = vec![(16.0, 16.0)];
        let stride = 5 + NUM_CLASSES;
        YoloHead {
            grid,
            anchors,
            input_size: 64.0,
            scores: vec![0.0; grid * grid * stride],
        }
    }

    #[test]
    fn decode_all_zero_logits_cell_zero() {
        // σ(0)=0.5 → bx = (2·0.5−0.5+0)/8 = 0.0625, bw = (2·0.5)²·16/64 = 0.25.
        let head = zero_head();
        let dets = decode_yolo(&head, 0.0).unwrap();
        let d0 = dets
            .iter()
            .find(|d| (d.bbox.cx - 0.0625).abs() < 1e-12 && (d.bbox.cy - 0.0625).abs() < 1e-12)
            .expect("cell (0,0) detection present");
        assert!((d0.bbox.w - 0.25).abs() < 1e-12);
        assert!((d0.bbox.h - 0.25).abs() < 1e-12);
        assert!((d0.confidence - 0.25).abs() < 1e-12); // σ(0)·σ(0)
        assert_eq!(d0.class_id, 0); // all-equal class logits tie to lowest
    }

    #[test]
    fn decode_drops_low_objectness() {
        let mut head = zero_head();
        for cell in head.scores.chunks_exact_mut(5 + NUM_CLASSES) {
            cell[4] = -20.0;
        }
        assert!(decode_yolo(&head, 0.01).unwrap().is_empty());
    }

    #[test]
    fn decode_rejects_non_finite() {
        let mut head = zero_head();
        head.scores[3] = f64::NAN;
        assert!(matches!(
            decode_yolo(&head, 0.1),
            Err(DetectionError::NonFiniteScores)
        ));
    }

    /// Straight-line reimplementation of the decode arithmetic used as an
    /// oracle on random heads.
    fn decode_oracle(head: &YoloHead) -> Vec<Detection> {
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut out = Vec::new();
        let nc = NUM_CLASSES;
        for i in 0..head.grid {
            for j in 0..head.grid {
                for a in 0..head.anchors.len() {
                    let base = ((i * head.grid + j) * head.anchors.len() + a) * (5 + nc);
                    let tx = head.scores[base];
                    let ty = head.scores[base + 1];
                    let tw = head.scores[base + 2];
                    let th = head.scores[base + 3];
                    let obj = head.scores[base + 4];
                    let mut cls = 0;
                    for c in 1..nc {
                        if head.scores[base + 5 + c] > head.scores[base + 5 + cls] {
                            cls = c;
                        }
                    }
                    let bx = ((2.0 * sig(tx) - 0.5 + j as f64) / head.grid as f64).clamp(0.0, 1.0);
                    let by = ((2.0 * sig(ty) - 0.5 + i as f64) / head.grid as f64).clamp(0.0, 1.0);
                    let bw = ((2.0 * sig(tw)) * (2.0 * sig(tw)) * head.anchors[a].0
                        / head.input_size)
                        .clamp(f64::MIN_POSITIVE, 1.0);
                    let bh = ((2.0 * sig(th)) * (2.0 * sig(th)) * head.anchors[a].1
                        / head.input_size)
                        .clamp(f64::MIN_POSITIVE, 1.0);
                    out.push(Detection {
                        class_id: cls as u8,
                        confidence: sig(obj) * sig(head.scores[base + 5 + cls]),
                        bbox: BBox {
                            cx: bx,
                            cy: by,
                            w: bw,
                            h: bh,
                        },
                    });
                }
            }
        }
        out
    }

    #[test]
    fn decode_matches_reimplementation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let grid = 4;
        let anchors = vec![(10.0, 24.0), (32.0, 16.0)];
        let stride = 5 + NUM_CLASSES;
        let head = YoloHead {
            grid,
            anchors: anchors.clone(),
            input_size: 128.0,
            scores: (0..grid * grid * anchors.len() * stride)
                .map(|_| rng.gen_range(-4.0..4.0))
                .collect(),
        };
        let got = decode_yolo(&head, 0.0).unwrap();
        let want = decode_oracle(&head);
        assert_eq!(got.len(), want.len());
        for (a, b) in got.iter().zip(&want) {
            assert_eq!(a.class_id, b.class_id);
            assert!((a.confidence - b.confidence).abs() < 1e-12);
            assert!((a.bbox.cx - b.bbox.cx).abs() < 1e-12);
            assert!((a.bbox.w - b.bbox.w).abs() < 1e-12);
        }
    }

    #[test]
    fn nms_suppresses_worse_overlap() {
        let a = det(0, 0.9, 0.5, 0.5, 0.2, 0.2);
        let b = det(0, 0.8, 0.51, 0.5, 0.2, 0.2);
        assert!(iou(&a.bbox, &b.bbox) > 0.45);
        let kept = nms(&[b, a], 0.45).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].confidence, 0.9);
    }

    #[test]
    fn nms_keeps_disjoint_and_cross_class() {
        let a = det(0, 0.9, 0.2, 0.2, 0.1, 0.1);
        let b = det(0, 0.8, 0.8, 0.8, 0.1, 0.1);
        assert_eq!(nms(&[a, b], 0.45).unwrap().len(), 2);
        // Same box, different class: both kept (per-class suppression).
        let c = det(1, 0.7, 0.2, 0.2, 0.1, 0.1);
        assert_eq!(nms(&[a, c], 0.45).unwrap().len(), 2);
    }

    /// Exhaustive suppression oracle: computes the IoU matrix, then keeps
    /// boxes by repeatedly extracting the highest-ranked remaining box and
    /// deleting its same-class overlaps.
    fn nms_oracle(dets: &[Detection], thr: f64) -> Vec<Detection> {
        let mut remaining: Vec<Detection> = dets.to_vec();
        let mut kept = Vec::new();
        while !remaining.is_empty() {
            let mut best = 0;
            for i in 1..remaining.len() {
                if rank_order(&remaining[i], &remaining[best]) == std::cmp::Ordering::Less {
                    best = i;
                }
            }
            let winner = remaining.remove(best);
            remaining.retain(|d| {
                d.class_id != winner.class_id || iou(&d.bbox, &winner.bbox) < thr
            });
            kept.push(winner);
        }
        kept
    }

    #[test]
    fn nms_matches_bruteforce_oracle_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(500);
        for _ in 0..200 {
            let n = rng.gen_range(0..=10);
            let dets: Vec<Detection> = (0..n)
                .map(|_| {
                    det(
                        rng.gen_range(0..3),
                        (rng.gen_range(0.0..1.0f64) * 16.0).round() / 16.0,
                        rng.gen_range(0.1..0.9),
                        rng.gen_range(0.1..0.9),
                        rng.gen_range(0.05..0.4),
                        rng.gen_range(0.05..0.4),
                    )
                })
                .collect();
            let got = nms(&dets, 0.45).unwrap();
            let want = nms_oracle(&dets, 0.45);
            assert_eq!(got, want);
        }
    }

    #[test]
    fn nms_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let dets: Vec<Detection> = (0..8)
                .map(|_| {
                    det(
                        rng.gen_range(0..2),
                        rng.gen_range(0.0..1.0),
                        rng.gen_range(0.2..0.8),
                        rng.gen_range(0.2..0.8),
                        rng.gen_range(0.1..0.5),
                        rng.gen_range(0.1..0.5),
                    )
                })
                .collect();
            let once = nms(&dets, 0.5).unwrap();
            let twice = nms(&once, 0.5).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn map_perfect_single_prediction() {
        let gt = GroundTruth {
            image_id: 0,
            class_id: 2,
            bbox: BBox {
                cx: 0.5,
                cy: 0.5,
                w: 0.2,
                h: 0.2,
            },
        };
        let pred = det(2, 0.9, 0.5, 0.5, 0.2, 0.2);
        assert_eq!(evaluate_map(&[(0, pred)], &[gt], 0.5).unwrap(), 1.0);
    }

    #[test]
    fn map_no_predictions_is_zero() {
        let gt = GroundTruth {
            image_id: 0,
            class_id: 1,
            bbox: BBox {
                cx: 0.5,
                cy: 0.5,
                w: 0.2,
                h: 0.2,
            },
        };
        assert_eq!(evaluate_map(&[], &[gt], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn map_empty_ground_truth_rejected() {
        assert!(matches!(
            evaluate_map(&[], &[], 0.5),
            Err(DetectionError::EmptyGroundTruth)
        ));
    }

    /// Hand-enumerated 3-image, 2-class fixture.
    ///
    /// Class 0: 2 GT; ranked preds TP, TP, FP → PR (1, 1, 2/3) at recall
    /// (0.5, 1.0, 1.0) → AP = 1.
    /// Class 1: 2 GT; ranked preds FP, TP, TP → precision (0, 1/2, 2/3) at
    /// recall (0, 0.5, 1.0), envelope 2/3 everywhere → AP = 2/3.
    /// mAP = (1 + 2/3) / 2 = 5/6.
    #[test]
    fn map_hand_enumerated_fixture() {
        let (preds, gts) = hand_fixture();
        let map = evaluate_map(&preds, &gts, 0.5).unwrap();
        assert!((map - 5.0 / 6.0).abs() < 1e-9, "mAP {map}");
    }

    pub(crate) fn hand_fixture() -> (Vec<(u32, Detection)>, Vec<GroundTruth>) {
        let g = |image_id, class_id, cx, cy| GroundTruth {
            image_id,
            class_id,
            bbox: BBox {
                cx,
                cy,
                w: 0.2,
                h: 0.2,
            },
        };
        let gts = vec![
            g(0, 0, 0.3, 0.3),
            g(0, 1, 0.7, 0.7),
            g(1, 0, 0.5, 0.5),
            g(2, 1, 0.4, 0.4),
        ];
        let preds = vec![
            (0, det(0, 0.9, 0.3, 0.3, 0.2, 0.2)),   // TP, IoU 1
            (1, det(0, 0.8, 0.52, 0.5, 0.2, 0.2)),  // TP, IoU ≈ 0.818
            (2, det(0, 0.7, 0.1, 0.1, 0.1, 0.1)),   // FP, no class-0 GT in img 2
            (0, det(1, 0.85, 0.7, 0.7, 0.1, 0.1)),  // FP, IoU 0.25 < 0.5
            (2, det(1, 0.6, 0.4, 0.4, 0.2, 0.2)),   // TP, IoU 1
            (0, det(1, 0.5, 0.7, 0.7, 0.2, 0.2)),   // TP, IoU 1 (GT unmatched)
        ];
        (preds, gts)
    }

    #[test]
    fn map_monotone_when_adding_correct_top_prediction() {
        let (mut preds, gts) = hand_fixture();
        let before = evaluate_map(&preds, &gts, 0.5).unwrap();
        // A perfect class-1 prediction above every false positive.
        preds.push((0, det(1, 0.99, 0.7, 0.7, 0.2, 0.2)));
        let after = evaluate_map(&preds, &gts, 0.5).unwrap();
        assert!(after >= before);
        assert!((0.0..=1.0).contains(&after));
    }

    #[test]
    fn select_target_prefers_large_then_centered() {
        let t = |id, cx, cy, w: f64, h: f64| TrackedDetection {
            id,
            detection: det(0, 0.9, cx, cy, w, h),
        };
        let dets = vec![t(0, 0.3, 0.3, 0.1, 0.1), t(1, 0.6, 0.6, 0.2, 0.2)];
        let none = HashSet::new();
        assert_eq!(select_target(&dets, &none).unwrap().id, 1);

        // Rejecting the largest yields the second-largest.
        let mut rejected = HashSet::new();
        rejected.insert(1);
        assert_eq!(select_target(&dets, &rejected).unwrap().id, 0);
        rejected.insert(0);
        assert!(select_target(&dets, &rejected).is_none());

        // Equal areas: the centered one wins.
        let dets = vec![t(5, 0.9, 0.9, 0.2, 0.2), t(6, 0.5, 0.5, 0.2, 0.2)];
        assert_eq!(select_target(&dets, &none).unwrap().id, 6);
    }

    #[test]
    fn select_target_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dets: Vec<TrackedDetection> = (0..7)
            .map(|id| TrackedDetection {
                id,
                detection: det(
                    (id % 3) as u8,
                    rng.gen_range(0.1..1.0),
                    rng.gen_range(0.1..0.9),
                    rng.gen_range(0.1..0.9),
                    rng.gen_range(0.05..0.5),
                    rng.gen_range(0.05..0.5),
                ),
            })
            .collect();
        let rejected: HashSet<u32> = [2u32, 5].into_iter().collect();
        let baseline = select_target(&dets, &rejected).unwrap().id;
        let mut perm = dets.clone();
        for rot in 1..perm.len() {
            perm.rotate_left(1);
            assert_eq!(select_target(&perm, &rejected).unwrap().id, baseline, "rotation {rot}");
        }
    }
}
