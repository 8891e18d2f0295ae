use serde::{Deserialize, Serialize};

use super::KnotDetection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub prediction: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

/// Single-class ("knot") detection evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvalReport {
    pub ap: f64,
    /// Equal to `ap`: there is one class.
    pub map: f64,
    /// Precision after each prediction in descending-score order.
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub iou_threshold: f64,
    pub matches: Vec<MatchPair>,
    pub num_ground_truth: usize,
    pub num_predictions: usize,
    /// Set when the result follows an empty-input convention.
    pub note: Option<String>,
}

/// Intersection over union of two sorted, deduplicated cell masks.
pub fn iou(a: &[(usize, usize)], b: &[(usize, usize)]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Prediction order: descending score, ties by original index.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Greedy one-to-one matching. Returns per-ranked-prediction TP flags and the pairs.
fn greedy_match(predictions: &[KnotDetection], gt: &[KnotDetection], thr: f64) -> (Vec<usize>, Vec<bool>, Vec<MatchPair>) {
    let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
    let order = ranking(&scores);
    let mut taken = vec![false; gt.len()];
    let mut tp = Vec::with_capacity(order.len());
    let mut matches = Vec::new();
    for &pi in &order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gt.iter().enumerate() {
            if taken[gi] {
                continue;
            }
            let v = iou(&predictions[pi].cells, &g.cells);
            if v >= thr && best.is_none_or(|(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        match best {
            Some((gi, v)) => {
                taken[gi] = true;
                tp.push(true);
                matches.push(MatchPair {
                    prediction: pi,
                    ground_truth: gi,
                    iou: v,
                });
            }
            None => tp.push(false),
        }
    }
    (order, tp, matches)
}

fn pr_curve(tp: &[bool], num_gt: usize) -> (Vec<f64>, Vec<f64>) {
    let mut hits = 0usize;
    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    for (k, &t) in tp.iter().enumerate() {
        if t {
            hits += 1;
        }
        precision.push(hits as f64 / (k + 1) as f64);
        recall.push(if num_gt == 0 { 0.0 } else { hits as f64 / num_gt as f64 });
    }
    (precision, recall)
}

/// All-point interpolated area under the precision-recall curve.
pub fn average_precision(precision: &[f64], recall: &[f64]) -> f64 {
    let mut interp = precision.to_vec();
    for k in (0..interp.len().saturating_sub(1)).rev() {
        interp[k] = interp[k].max(interp[k + 1]);
    }
    let mut prev = 0.0;
    let mut ap = 0.0;
    for (r, p) in recall.iter().zip(&interp) {
        ap += (r - prev) * p;
        prev = *r;
    }
    ap
}

fn finish(
    tp: &[bool],
    num_gt: usize,
    num_pred: usize,
    thr: f64,
    matches: Vec<MatchPair>,
) -> DetectionEvalReport {
    let (precision, recall) = pr_curve(tp, num_gt);
    let (ap, note) = if num_gt == 0 && num_pred == 0 {
        (1.0, Some("no ground truth and no predictions: mAP defined as 1".to_string()))
    } else if num_gt == 0 {
        (0.0, Some("no ground truth: every prediction is a false positive".to_string()))
    } else if num_pred == 0 {
        (0.0, Some("no predictions".to_string()))
    } else {
        (average_precision(&precision, &recall), None)
    };
    DetectionEvalReport {
        ap,
        map: ap,
        precision,
        recall,
        iou_threshold: thr,
        matches,
        num_ground_truth: num_gt,
        num_predictions: num_pred,
        note,
    }
}

/// Evaluates predictions against ground truth with mask IoU.
///
/// Predictions are visited by descending score and each is matched to the
/// unmatched ground truth with the highest IoU at or above `iou_threshold`.
/// Ground-truth scores are ignored. Empty vs. empty yields mAP 1; empty
/// predictions against non-empty ground truth yield 0.
pub fn evaluate_map(predictions: &[KnotDetection], ground_truth: &[KnotDetection], iou_threshold: f64) -> DetectionEvalReport {
    let (_, tp, matches) = greedy_match(predictions, ground_truth, iou_threshold);
    finish(&tp, ground_truth.len(), predictions.len(), iou_threshold, matches)
}

/// Evaluates several logs. Matching stays per log; the aggregate pools the
/// ranked TP/FP decisions of all logs and sums ground-truth counts.
pub fn evaluate_many(
    logs: &[(Vec<KnotDetection>, Vec<KnotDetection>)],
    iou_threshold: f64,
) -> (Vec<DetectionEvalReport>, DetectionEvalReport) {
    let mut per_log = Vec::with_capacity(logs.len());
    let mut pooled: Vec<(f64, usize, usize, bool)> = Vec::new();
    let (mut num_gt, mut num_pred) = (0, 0);
    for (li, (pred, gt)) in logs.iter().enumerate() {
        let (order, tp, matches) = greedy_match(pred, gt, iou_threshold);
        for (k, &pi) in order.iter().enumerate() {
            pooled.push((pred[pi].score, li, pi, tp[k]));
        }
        num_gt += gt.len();
        num_pred += pred.len();
        per_log.push(finish(&tp, gt.len(), pred.len(), iou_threshold, matches));
    }
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let tp: Vec<bool> = pooled.iter().map(|p| p.3).collect();
    let aggregate = finish(&tp, num_gt, num_pred, iou_threshold, Vec::new());
    (per_log, aggregate)
}
