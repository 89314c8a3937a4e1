//! Detection mAP and report ROC-AUC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::models::{ReportGuide, VisionGuide};
use crate::suppression::{nms, DetectionSet};
use crate::synthdata::{multi_hot, PairedSample};

pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Area under the monotone precision envelope.
    #[default]
    AllPoint,
    /// Mean of the envelope sampled at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

/// One prediction for a single class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub image: usize,
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    pub image: usize,
    pub score: f64,
    pub category: usize,
    pub true_positive: bool,
    /// Index into the ground-truth list of the class.
    pub matched_gt: Option<usize>,
}

/// Greedy matching in descending score order. `gts` holds `(image, box)`
/// for one class. Results come back in processing order.
pub fn match_class(preds: &[ScoredBox], gts: &[(usize, BBox)], category: usize, iou_thr: f64) -> Vec<MatchResult> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score).then(a.cmp(&b)));
    let mut used = vec![false; gts.len()];
    order
        .into_iter()
        .map(|i| {
            let p = &preds[i];
            let mut best: Option<(usize, f64)> = None;
            for (g, (img, gt)) in gts.iter().enumerate() {
                if *img != p.image || used[g] {
                    continue;
                }
                let v = p.bbox.iou(gt);
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
            let hit = best.filter(|&(_, v)| v >= iou_thr).map(|(g, _)| g);
            if let Some(g) = hit {
                used[g] = true;
            }
            MatchResult {
                image: p.image,
                score: p.score,
                category,
                true_positive: hit.is_some(),
                matched_gt: hit,
            }
        })
        .collect()
}

/// AP for one class, or `None` when the class has no ground truth.
pub fn average_precision(preds: &[ScoredBox], gts: &[(usize, BBox)], iou_thr: f64, interp: Interpolation) -> Option<f64> {
    if gts.is_empty() {
        return None;
    }
    let matches = match_class(preds, gts, 0, iou_thr);
    let npos = gts.len() as f64;
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut recall = Vec::with_capacity(matches.len());
    let mut precision = Vec::with_capacity(matches.len());
    for m in &matches {
        if m.true_positive {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        recall.push(tp / npos);
        precision.push(tp / (tp + fp));
    }
    Some(match interp {
        Interpolation::AllPoint => all_point(&recall, &precision),
        Interpolation::ElevenPoint => eleven_point(&recall, &precision),
    })
}

fn all_point(recall: &[f64], precision: &[f64]) -> f64 {
    let mut mrec = Vec::with_capacity(recall.len() + 2);
    mrec.push(0.0);
    mrec.extend_from_slice(recall);
    mrec.push(1.0);
    let mut mpre = Vec::with_capacity(precision.len() + 2);
    mpre.push(0.0);
    mpre.extend_from_slice(precision);
    mpre.push(0.0);
    for i in (0..mpre.len() - 1).rev() {
        mpre[i] = mpre[i].max(mpre[i + 1]);
    }
    (0..mrec.len() - 1)
        .filter(|&i| mrec[i + 1] != mrec[i])
        .map(|i| (mrec[i + 1] - mrec[i]) * mpre[i + 1])
        .sum()
}

fn eleven_point(recall: &[f64], precision: &[f64]) -> f64 {
    (0..=10)
        .map(|i| {
            let r = i as f64 / 10.0;
            recall
                .iter()
                .zip(precision)
                .filter(|(&rc, _)| rc >= r)
                .map(|(_, &p)| p)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 11.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub threshold: f64,
    /// `None` for classes without ground truth.
    pub per_class: Vec<Option<f64>>,
    pub map: f64,
}

/// mAP over a set of images. `preds[i]` and `gts[i]` belong to image `i`.
pub fn mean_ap(
    preds: &[DetectionSet],
    gts: &[Vec<(usize, BBox)>],
    num_classes: usize,
    thresholds: &[f64],
    interp: Interpolation,
) -> Result<Vec<ThresholdAp>> {
    if preds.len() != gts.len() {
        return Err(Error::DimensionMismatch {
            expected: gts.len(),
            actual: preds.len(),
        });
    }
    if gts.iter().all(|g| g.is_empty()) {
        return Err(Error::NoGroundTruth);
    }
    let mut class_preds: Vec<Vec<ScoredBox>> = vec![Vec::new(); num_classes];
    let mut class_gts: Vec<Vec<(usize, BBox)>> = vec![Vec::new(); num_classes];
    for (image, (p, g)) in preds.iter().zip(gts).enumerate() {
        for d in p.iter() {
            if d.category >= num_classes {
                return Err(Error::Shape(format!("prediction category {} >= {num_classes}", d.category)));
            }
            class_preds[d.category].push(ScoredBox {
                image,
                bbox: d.bbox,
                score: d.score,
            });
        }
        for &(c, b) in g {
            if c >= num_classes {
                return Err(Error::Shape(format!("ground-truth category {c} >= {num_classes}")));
            }
            class_gts[c].push((image, b));
        }
    }
    Ok(thresholds
        .iter()
        .map(|&thr| {
            let per_class: Vec<Option<f64>> = (0..num_classes)
                .map(|c| average_precision(&class_preds[c], &class_gts[c], thr, interp))
                .collect();
            let supported: Vec<f64> = per_class.iter().flatten().copied().collect();
            ThresholdAp {
                threshold: thr,
                map: supported.iter().sum::<f64>() / supported.len() as f64,
                per_class,
            }
        })
        .collect())
}

/// Probability that a random positive outranks a random negative, ties
/// counted one half. `None` unless both labels occur.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let n_pos = labels.iter().filter(|&&l| l != 0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks, 1-based
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] != 0 {
                rank_sum_pos += mid;
            }
        }
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Per-class AUCs (rows are samples) and their mean over defined classes.
pub fn macro_auc(scores: &[Vec<f64>], labels: &[Vec<u8>], num_classes: usize) -> (Option<f64>, Vec<Option<f64>>) {
    let per_class: Vec<Option<f64>> = (0..num_classes)
        .map(|c| {
            let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
            let l: Vec<u8> = labels.iter().map(|r| r[c]).collect();
            let auc = roc_auc(&s, &l);
            if auc.is_none() {
                log::warn!("class {c} has a single label value; skipped in macro AUC");
            }
            auc
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    (mean, per_class)
}

/// How predictions are post-processed before scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub score_floor: f64,
    pub nms_iou: f64,
    pub thresholds: Vec<f64>,
    pub interpolation: Interpolation,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            score_floor: 0.05,
            nms_iou: 0.5,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            interpolation: Interpolation::AllPoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub generation: usize,
    pub detection: Vec<ThresholdAp>,
    pub macro_auc: Option<f64>,
    pub per_class_auc: Vec<Option<f64>>,
}

impl MetricRecord {
    /// mAP at `threshold`, if that threshold was evaluated.
    pub fn map_at(&self, threshold: f64) -> Option<f64> {
        self.detection
            .iter()
            .find(|t| (t.threshold - threshold).abs() < 1e-12)
            .map(|t| t.map)
    }
}

pub fn evaluate_detector(
    guide: &dyn VisionGuide,
    samples: &[&PairedSample],
    num_classes: usize,
    settings: &EvalSettings,
) -> Result<Vec<ThresholdAp>> {
    let mut preds = Vec::with_capacity(samples.len());
    let mut gts = Vec::with_capacity(samples.len());
    for s in samples {
        let dets = guide.detect(s, settings.score_floor)?;
        preds.push(nms(&dets, settings.nms_iou));
        gts.push(s.truth().iter().map(|a| (a.category, a.bbox)).collect());
    }
    mean_ap(&preds, &gts, num_classes, &settings.thresholds, settings.interpolation)
}

pub fn evaluate_classifier(
    guide: &dyn ReportGuide,
    samples: &[&PairedSample],
    num_classes: usize,
) -> Result<(Option<f64>, Vec<Option<f64>>)> {
    let mut scores = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for s in samples {
        scores.push(guide.classify(s)?);
        labels.push(multi_hot(s.truth(), num_classes));
    }
    Ok(macro_auc(&scores, &labels, num_classes))
}
