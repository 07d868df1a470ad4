//! Detection scoring against ground truth.
//!
//! Matching is greedy by score: detections are visited in descending score
//! (ties by input index) and each claims the unmatched same-class
//! ground-truth box with the highest IoU, provided that IoU is strictly
//! greater than the threshold.
//!
//! Open-world detection has no true negatives, so `tn` is always 0 and
//! `accuracy = tp / (tp + fp + fn)`. Every ratio with a zero denominator is
//! reported as 0.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::AnnotationSet;
use crate::geometry::{iou, BBox};

/// IoU a detection must exceed to match a ground-truth box.
pub const DEFAULT_MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Area under the precision envelope at every recall step.
    #[default]
    AllPoint,
    /// Mean of the envelope sampled at recall 0.0, 0.1, ..., 1.0.
    ElevenPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub detection: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<MatchPair>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_ground_truth: Vec<usize>,
}

impl Matching {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }

    pub fn fp(&self) -> usize {
        self.unmatched_detections.len()
    }

    pub fn fn_(&self) -> usize {
        self.unmatched_ground_truth.len()
    }
}

/// Indices of `dets` in visiting order: score descending, then index.
fn score_order(dets: &[BBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score()
            .total_cmp(&dets[a].score())
            .then(a.cmp(&b))
    });
    order
}

/// Greedy matching; returns, per visited detection, the matched gt index.
fn greedy(dets: &[BBox], order: &[usize], gt: &[BBox], threshold: f64) -> Vec<Option<(usize, f64)>> {
    let mut taken = vec![false; gt.len()];
    order
        .iter()
        .map(|&d| {
            let det = &dets[d];
            let mut best: Option<(usize, f64)> = None;
            for (g, truth) in gt.iter().enumerate() {
                if taken[g] || truth.class_id() != det.class_id() {
                    continue;
                }
                let v = iou(det, truth);
                if v > threshold && best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            best
        })
        .collect()
}

pub fn match_detections(dets: &[BBox], gt: &AnnotationSet, iou_threshold: f64) -> Matching {
    let order = score_order(dets);
    let hits = greedy(dets, &order, &gt.boxes, iou_threshold);
    let mut matching = Matching::default();
    let mut gt_used = vec![false; gt.boxes.len()];
    for (&d, hit) in order.iter().zip(hits) {
        match hit {
            Some((g, v)) => {
                gt_used[g] = true;
                matching.pairs.push(MatchPair {
                    detection: d,
                    ground_truth: g,
                    iou: v,
                });
            }
            None => matching.unmatched_detections.push(d),
        }
    }
    matching.unmatched_detections.sort_unstable();
    matching.unmatched_ground_truth = (0..gt.boxes.len()).filter(|&g| !gt_used[g]).collect();
    matching
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

impl Prf1 {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            tn: 0,
            precision,
            recall,
            f1,
            accuracy: ratio(tp, tp + fp + fn_),
        }
    }
}

pub fn compute_prf1(matching: &Matching) -> Prf1 {
    Prf1::from_counts(matching.tp(), matching.fp(), matching.fn_())
}

/// Average precision of one class.
///
/// `dets` and `gt` should hold only that class; detections are ranked here.
pub fn average_precision(dets: &[BBox], gt: &[BBox], iou_threshold: f64, interp: Interpolation) -> f64 {
    if gt.is_empty() {
        return 0.0;
    }
    let order = score_order(dets);
    let hits = greedy(dets, &order, gt, iou_threshold);
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(hits.len());
    for (k, hit) in hits.iter().enumerate() {
        if hit.is_some() {
            tp += 1;
        }
        curve.push((tp as f64 / gt.len() as f64, tp as f64 / (k + 1) as f64));
    }
    area_under_envelope(&curve, interp)
}

/// `curve` holds `(recall, precision)` after each ranked detection.
fn area_under_envelope(curve: &[(f64, f64)], interp: Interpolation) -> f64 {
    if curve.is_empty() {
        return 0.0;
    }
    // envelope[i] = max precision at any point from i onwards.
    let mut envelope: Vec<f64> = curve.iter().map(|&(_, p)| p).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    match interp {
        Interpolation::AllPoint => {
            let mut area = 0.0;
            let mut prev_recall = 0.0;
            for (i, &(r, _)) in curve.iter().enumerate() {
                if r > prev_recall {
                    area += (r - prev_recall) * envelope[i];
                    prev_recall = r;
                }
            }
            area
        }
        Interpolation::ElevenPoint => {
            let mut sum = 0.0;
            for step in 0..=10 {
                let level = step as f64 / 10.0;
                let p = curve
                    .iter()
                    .position(|&(r, _)| r >= level - 1e-12)
                    .map_or(0.0, |i| envelope[i]);
                sum += p;
            }
            sum / 11.0
        }
    }
}

/// Mean of per-class APs over the classes listed; `None` when there are none.
pub fn mean_ap(per_class_ap: &BTreeMap<u32, f64>) -> Option<f64> {
    if per_class_ap.is_empty() {
        None
    } else {
        Some(per_class_ap.values().sum::<f64>() / per_class_ap.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_MATCH_IOU,
            interpolation: Interpolation::AllPoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub image: String,
    pub iou_threshold: f64,
    #[serde(flatten)]
    pub counts: Prf1,
    /// AP for every class with at least one ground-truth box.
    pub per_class_ap: BTreeMap<u32, f64>,
    pub map: Option<f64>,
}

/// Match, count and rank-score `dets` against `gt`.
pub fn evaluate(dets: &[BBox], gt: &AnnotationSet, cfg: &EvalConfig) -> EvalReport {
    let matching = match_detections(dets, gt, cfg.iou_threshold);
    let counts = compute_prf1(&matching);
    debug_assert_eq!(counts.tp + counts.fn_, gt.boxes.len());
    debug_assert_eq!(counts.tp + counts.fp, dets.len());

    let mut classes: Vec<u32> = gt.boxes.iter().map(BBox::class_id).collect();
    classes.sort_unstable();
    classes.dedup();
    let per_class_ap: BTreeMap<u32, f64> = classes
        .par_iter()
        .map(|&c| {
            let d: Vec<BBox> = dets.iter().filter(|b| b.class_id() == c).copied().collect();
            let g: Vec<BBox> = gt.boxes.iter().filter(|b| b.class_id() == c).copied().collect();
            (c, average_precision(&d, &g, cfg.iou_threshold, cfg.interpolation))
        })
        .collect();
    let map = mean_ap(&per_class_ap);
    EvalReport {
        image: gt.image_id.clone(),
        iou_threshold: cfg.iou_threshold,
        counts,
        per_class_ap,
        map,
    }
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.counts;
        writeln!(f, "image      {}", self.image)?;
        writeln!(f, "match IoU  > {}", self.iou_threshold)?;
        writeln!(f, "TP {:>6}   FP {:>6}   FN {:>6}   TN {:>6}", c.tp, c.fp, c.fn_, c.tn)?;
        writeln!(f, "{:<10} {:>8}", "metric", "value")?;
        for (name, v) in [
            ("accuracy", c.accuracy),
            ("precision", c.precision),
            ("recall", c.recall),
            ("f1", c.f1),
        ] {
            writeln!(f, "{name:<10} {v:>8.4}")?;
        }
        match self.map {
            Some(m) => writeln!(f, "{:<10} {m:>8.4}", "mAP")?,
            None => writeln!(f, "{:<10} {:>8}", "mAP", "n/a")?,
        }
        for (class, ap) in &self.per_class_ap {
            writeln!(f, "  AP[{class}] {ap:.4}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64, class: u32, score: f64) -> BBox {
        BBox::new(x0, y0, x1, y1, class, score).unwrap()
    }

    fn gt(boxes: Vec<BBox>) -> AnnotationSet {
        AnnotationSet::new("t", 1000, 1000).with_boxes(boxes)
    }

    #[test]
    fn match_above_threshold() {
        // IoU = 60 / 100.
        let g = gt(vec![bx(0., 0., 10., 10., 0, 1.0)]);
        let d = [bx(0., 0., 10., 6., 0, 0.9)];
        assert_eq!(match_detections(&d, &g, 0.5).tp(), 1);
    }

    #[test]
    fn iou_exactly_half_does_not_match() {
        let g = gt(vec![bx(0., 0., 10., 10., 0, 1.0)]);
        let d = [bx(0., 0., 10., 5., 0, 0.9)];
        assert_eq!(iou(&d[0], &g.boxes[0]), 0.5);
        let m = match_detections(&d, &g, 0.5);
        assert_eq!(m.tp(), 0);
        assert_eq!((m.fp(), m.fn_()), (1, 1));
    }

    #[test]
    fn higher_score_wins_the_gt() {
        let g = gt(vec![bx(0., 0., 10., 10., 0, 1.0)]);
        let d = [bx(0., 0., 10., 9., 0, 0.8), bx(0., 0., 10., 8., 0, 0.9)];
        let m = match_detections(&d, &g, 0.5);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].detection, 1);
        assert_eq!(m.unmatched_detections, vec![0]);
    }

    #[test]
    fn class_mismatch_never_matches() {
        let g = gt(vec![bx(0., 0., 10., 10., 0, 1.0)]);
        let d = [bx(0., 0., 10., 10., 1, 0.9)];
        assert_eq!(match_detections(&d, &g, 0.5).tp(), 0);
    }

    #[test]
    fn prf1_examples() {
        let p = Prf1::from_counts(1, 0, 0);
        assert_eq!((p.precision, p.recall, p.f1, p.accuracy), (1.0, 1.0, 1.0, 1.0));
        let p = Prf1::from_counts(0, 0, 0);
        assert_eq!((p.precision, p.recall, p.f1, p.accuracy), (0.0, 0.0, 0.0, 0.0));
        let p = Prf1::from_counts(3, 1, 2);
        assert_eq!(p.precision, 0.75);
        assert_eq!(p.recall, 0.6);
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.accuracy, 0.5);
        assert_eq!(p.tn, 0);
    }

    #[test]
    fn ap_examples() {
        let g = vec![bx(0., 0., 10., 10., 0, 1.0), bx(20., 20., 30., 30., 0, 1.0)];
        let all_hit = [bx(0., 0., 10., 10., 0, 0.9), bx(20., 20., 30., 30., 0, 0.8)];
        assert_eq!(average_precision(&all_hit, &g, 0.5, Interpolation::AllPoint), 1.0);
        let none = [bx(100., 100., 110., 110., 0, 0.9)];
        assert_eq!(average_precision(&none, &g, 0.5, Interpolation::AllPoint), 0.0);
        // hit, miss, hit.
        let ranked = [
            bx(0., 0., 10., 10., 0, 0.9),
            bx(100., 100., 110., 110., 0, 0.8),
            bx(20., 20., 30., 30., 0, 0.7),
        ];
        let ap = average_precision(&ranked, &g, 0.5, Interpolation::AllPoint);
        assert!((ap - 5.0 / 6.0).abs() < 1e-12, "{ap}");
        // 11-point: recall <= 0.5 -> 1.0 (6 levels), > 0.5 -> 2/3 (5 levels).
        let ap11 = average_precision(&ranked, &g, 0.5, Interpolation::ElevenPoint);
        assert!((ap11 - (6.0 + 5.0 * 2.0 / 3.0) / 11.0).abs() < 1e-12);
    }

    #[test]
    fn map_examples() {
        let one: BTreeMap<u32, f64> = [(0, 0.8333)].into();
        assert_eq!(mean_ap(&one), Some(0.8333));
        let two: BTreeMap<u32, f64> = [(0, 1.0), (1, 0.0)].into();
        assert_eq!(mean_ap(&two), Some(0.5));
        assert_eq!(mean_ap(&BTreeMap::new()), None);
    }

    #[test]
    fn classes_without_ground_truth_are_excluded() {
        // Class 0 and 1 have gt, class 2 only has a (false) detection.
        let g = gt(vec![bx(0., 0., 10., 10., 0, 1.0), bx(20., 20., 30., 30., 1, 1.0)]);
        let d = [
            bx(0., 0., 10., 10., 0, 0.9),
            bx(50., 50., 60., 60., 1, 0.8),
            bx(80., 80., 90., 90., 2, 0.7),
        ];
        let report = evaluate(&d, &g, &EvalConfig::default());
        assert_eq!(report.per_class_ap.len(), 2);
        assert_eq!(report.map, Some(0.5));
        // Counting the empty class as AP 0 would give 1/3 instead.
        let with_empty = (1.0 + 0.0 + 0.0) / 3.0;
        assert_ne!(report.map, Some(with_empty));
    }

    #[test]
    fn self_evaluation_is_perfect() {
        let g = gt(vec![bx(0., 0., 10., 10., 0, 1.0), bx(20., 20., 30., 30., 3, 1.0)]);
        let report = evaluate(&g.boxes, &g, &EvalConfig::default());
        let c = report.counts;
        assert_eq!((c.precision, c.recall, c.f1, c.accuracy), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(report.map, Some(1.0));
        let text = report.to_string();
        assert!(text.contains("recall"));
        let v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(v["fn"], 0);
        assert_eq!(v["tp"], 2);
    }

    #[test]
    fn no_ground_truth_means_no_map() {
        let report = evaluate(&[bx(0., 0., 1., 1., 0, 0.5)], &gt(vec![]), &EvalConfig::default());
        assert_eq!(report.map, None);
        assert_eq!(report.counts.fp, 1);
    }
}
