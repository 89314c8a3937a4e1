//! Loss functions for both distillation objectives.
//!
//! The report objective is per-class binary cross-entropy averaged over
//! classes. The detection objective is focal loss over every anchor/class
//! pair plus smooth-L1 on positive anchors, both normalized by the
//! positive-anchor count. Each batch loss is split into a supervised part
//! (real labels) and an unsupervised part (pseudo labels), each averaged
//! over its own item count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Probability clip applied before every logarithm.
pub const CLIP_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub smooth_l1_beta: f64,
    /// Anchors with IoU at or above this are positives.
    pub positive_iou: f64,
    /// Anchors with IoU below this are negatives; the band between is ignored.
    pub negative_iou: f64,
    /// Also mark each target's best-overlapping anchors positive.
    pub low_quality_matches: bool,
    pub clip_eps: f64,
    /// Weight of the unsupervised part.
    pub unsup_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            smooth_l1_beta: 1.0 / 9.0,
            positive_iou: 0.5,
            negative_iou: 0.4,
            low_quality_matches: true,
            clip_eps: CLIP_EPS,
            unsup_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TermCounts {
    pub labeled_items: usize,
    pub unlabeled_items: usize,
    /// Unlabeled items with no pseudo labels; they contribute nothing.
    pub empty_unlabeled_items: usize,
    pub positive_anchors: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub supervised_part: f64,
    pub unsupervised_part: f64,
    pub term_counts: TermCounts,
}

#[inline]
pub fn clip_prob(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn bce_term(p: f64, t: f64) -> f64 {
    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
}

/// Mean over classes of binary cross-entropy.
pub fn multilabel_ce(probs: &[f64], targets: &[u8]) -> Result<f64> {
    check_len(probs.len(), targets.len())?;
    if probs.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = probs
        .iter()
        .zip(targets)
        .map(|(&p, &t)| bce_term(clip_prob(p, CLIP_EPS), t as f64))
        .sum();
    Ok(sum / probs.len() as f64)
}

/// Gradient of [`multilabel_ce`] with respect to the probabilities.
pub fn multilabel_ce_grad(probs: &[f64], targets: &[u8]) -> Result<Vec<f64>> {
    check_len(probs.len(), targets.len())?;
    let k = probs.len() as f64;
    Ok(probs
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            if p <= CLIP_EPS || p >= 1.0 - CLIP_EPS {
                return 0.0;
            }
            let t = t as f64;
            (-t / p + (1.0 - t) / (1.0 - p)) / k
        })
        .collect())
}

/// Multi-label CE on logits; returns the loss and its gradient w.r.t. the
/// logits. With `p = sigmoid(z)` the gradient is `(p - t) / K` away from
/// the clip bounds.
pub fn multilabel_ce_logits(logits: &[f64], targets: &[u8]) -> Result<(f64, Vec<f64>)> {
    check_len(logits.len(), targets.len())?;
    let k = logits.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &t) in logits.iter().zip(targets) {
        let raw = sigmoid(z);
        let p = clip_prob(raw, CLIP_EPS);
        let t = t as f64;
        loss += bce_term(p, t);
        grad.push(if raw == p { (p - t) / k } else { 0.0 });
    }
    Ok((loss / k, grad))
}

/// `-alpha_t * (1 - p_t)^gamma * ln(p_t)`.
pub fn focal_loss(p: f64, t: u8, alpha: f64, gamma: f64) -> f64 {
    let p = clip_prob(p, CLIP_EPS);
    let (p_t, alpha_t) = if t == 1 { (p, alpha) } else { (1.0 - p, 1.0 - alpha) };
    -alpha_t * (1.0 - p_t).powf(gamma) * p_t.ln()
}

/// Derivative of [`focal_loss`] with respect to `p`.
pub fn focal_loss_grad(p: f64, t: u8, alpha: f64, gamma: f64) -> f64 {
    if p <= CLIP_EPS || p >= 1.0 - CLIP_EPS {
        return 0.0;
    }
    let (p_t, alpha_t, sign) = if t == 1 { (p, alpha, 1.0) } else { (1.0 - p, 1.0 - alpha, -1.0) };
    let q = 1.0 - p_t;
    let d_dpt = if gamma == 0.0 {
        -alpha_t / p_t
    } else {
        alpha_t * (gamma * q.powf(gamma - 1.0) * p_t.ln() - q.powf(gamma) / p_t)
    };
    sign * d_dpt
}

/// Focal loss on a logit; returns the loss and its derivative w.r.t. the logit.
#[inline]
pub fn focal_loss_logit(z: f64, t: u8, alpha: f64, gamma: f64) -> (f64, f64) {
    let raw = sigmoid(z);
    let p = clip_prob(raw, CLIP_EPS);
    let loss = focal_loss(p, t, alpha, gamma);
    if raw != p {
        return (loss, 0.0);
    }
    (loss, focal_loss_grad(p, t, alpha, gamma) * p * (1.0 - p))
}

pub fn smooth_l1(pred: &[f64], target: &[f64], beta: f64) -> Result<f64> {
    check_len(pred.len(), target.len())?;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(&a, &b)| {
            let d = (a - b).abs();
            if d < beta {
                0.5 * d * d / beta
            } else {
                d - 0.5 * beta
            }
        })
        .sum())
}

/// Gradient of [`smooth_l1`] with respect to `pred`.
pub fn smooth_l1_grad(pred: &[f64], target: &[f64], beta: f64) -> Result<Vec<f64>> {
    check_len(pred.len(), target.len())?;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(&a, &b)| {
            let d = a - b;
            if d.abs() < beta {
                d / beta
            } else {
                d.signum()
            }
        })
        .collect())
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// report objective

/// One report in a distillation batch.
#[derive(Debug, Clone, Copy)]
pub struct ReportLossItem<'a> {
    pub logits: &'a [f64],
    /// Real labels for labeled items, pseudo labels otherwise.
    pub targets: &'a [u8],
    pub labeled: bool,
}

/// Batch report loss; also returns the gradient w.r.t. each item's logits.
pub fn report_loss(items: &[ReportLossItem<'_>], unsup_weight: f64) -> Result<(LossValue, Vec<Vec<f64>>)> {
    let n_l = items.iter().filter(|i| i.labeled).count();
    let n_u = items.len() - n_l;
    if n_l == 0 && n_u == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut value = LossValue {
        term_counts: TermCounts {
            labeled_items: n_l,
            unlabeled_items: n_u,
            ..TermCounts::default()
        },
        ..LossValue::default()
    };
    let mut grads = Vec::with_capacity(items.len());
    for item in items {
        let (l, mut g) = multilabel_ce_logits(item.logits, item.targets)?;
        let scale = if item.labeled {
            1.0 / n_l as f64
        } else {
            unsup_weight / n_u as f64
        };
        if item.labeled {
            value.supervised_part += l * scale;
        } else {
            value.unsupervised_part += l * scale;
        }
        g.iter_mut().for_each(|v| *v *= scale);
        grads.push(g);
    }
    value.total = value.supervised_part + value.unsupervised_part;
    Ok((value, grads))
}

// ---------------------------------------------------------------------------
// detection objective

/// Regression parameters of a box relative to an anchor:
/// `(dx, dy, dw, dh)` with `dx = (cx_box - cx_anchor) / s` and
/// `dw = (w_box - s) / s` for anchor side `s`.
pub fn encode_offsets(anchor: &BBox, target: &BBox) -> [f64; 4] {
    let (acx, acy) = anchor.center();
    let (tcx, tcy) = target.center();
    let (sw, sh) = (anchor.width(), anchor.height());
    [
        (tcx - acx) / sw,
        (tcy - acy) / sh,
        (target.width() - sw) / sw,
        (target.height() - sh) / sh,
    ]
}

/// Inverse of [`encode_offsets`]; returns `(cx, cy, w, h)` unclamped.
pub fn decode_offsets(anchor: &BBox, offsets: &[f64]) -> (f64, f64, f64, f64) {
    let (acx, acy) = anchor.center();
    let (sw, sh) = (anchor.width(), anchor.height());
    (
        acx + offsets[0] * sw,
        acy + offsets[1] * sh,
        sw * (1.0 + offsets[2]),
        sh * (1.0 + offsets[3]),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorMatch {
    Positive(usize),
    Negative,
    Ignore,
}

pub fn match_anchors(anchors: &[BBox], targets: &[(usize, BBox)], cfg: &LossConfig) -> Vec<AnchorMatch> {
    if targets.is_empty() {
        return vec![AnchorMatch::Negative; anchors.len()];
    }
    let mut best = vec![(f64::NEG_INFINITY, 0usize); anchors.len()];
    let mut best_per_target = vec![0.0f64; targets.len()];
    let mut ious = vec![0.0; anchors.len() * targets.len()];
    for (a, anchor) in anchors.iter().enumerate() {
        for (g, (_, gt)) in targets.iter().enumerate() {
            let v = anchor.iou(gt);
            ious[a * targets.len() + g] = v;
            if v > best[a].0 {
                best[a] = (v, g);
            }
            if v > best_per_target[g] {
                best_per_target[g] = v;
            }
        }
    }
    let mut out: Vec<AnchorMatch> = best
        .iter()
        .map(|&(v, g)| {
            if v >= cfg.positive_iou {
                AnchorMatch::Positive(g)
            } else if v < cfg.negative_iou {
                AnchorMatch::Negative
            } else {
                AnchorMatch::Ignore
            }
        })
        .collect();
    if cfg.low_quality_matches {
        for (a, slot) in out.iter_mut().enumerate() {
            let row = &ious[a * targets.len()..(a + 1) * targets.len()];
            let is_best = row
                .iter()
                .zip(&best_per_target)
                .any(|(&v, &b)| b > 0.0 && v == b);
            if is_best {
                *slot = AnchorMatch::Positive(best[a].1);
            }
        }
    }
    out
}

/// Per-image detection loss for dense outputs laid out anchor-major as
/// `[logit_0 .. logit_{K-1}, dx, dy, dw, dh]`. Returns
/// `(classification, regression, positives, d loss / d outputs)`.
pub fn detection_image_loss(
    outputs: &[f64],
    num_classes: usize,
    anchors: &[BBox],
    targets: &[(usize, BBox)],
    cfg: &LossConfig,
) -> Result<(f64, f64, usize, Vec<f64>)> {
    let stride = num_classes + 4;
    check_len(anchors.len() * stride, outputs.len())?;
    let matches = match_anchors(anchors, targets, cfg);
    let num_pos = matches
        .iter()
        .filter(|m| matches!(m, AnchorMatch::Positive(_)))
        .count();
    let norm = 1.0 / num_pos.max(1) as f64;
    let mut grad = vec![0.0; outputs.len()];
    let (mut cls, mut reg) = (0.0, 0.0);
    for (a, m) in matches.iter().enumerate() {
        let row = &outputs[a * stride..(a + 1) * stride];
        let grow = &mut grad[a * stride..(a + 1) * stride];
        let positive_class = match m {
            AnchorMatch::Ignore => continue,
            AnchorMatch::Negative => None,
            AnchorMatch::Positive(g) => Some(targets[*g].0),
        };
        for k in 0..num_classes {
            let t = (positive_class == Some(k)) as u8;
            let (l, d) = focal_loss_logit(row[k], t, cfg.focal_alpha, cfg.focal_gamma);
            cls += l;
            grow[k] = d * norm;
        }
        if let AnchorMatch::Positive(g) = m {
            let tgt = encode_offsets(&anchors[a], &targets[*g].1);
            let pred = &row[num_classes..];
            reg += smooth_l1(pred, &tgt, cfg.smooth_l1_beta)?;
            let d = smooth_l1_grad(pred, &tgt, cfg.smooth_l1_beta)?;
            for (slot, v) in grow[num_classes..].iter_mut().zip(d) {
                *slot = v * norm;
            }
        }
    }
    Ok((cls * norm, reg * norm, num_pos, grad))
}

/// One image in a detection batch.
#[derive(Debug, Clone, Copy)]
pub struct DetectionLossItem<'a> {
    pub outputs: &'a [f64],
    /// Real annotations for labeled items, refined pseudo labels otherwise.
    pub targets: &'a [(usize, BBox)],
    pub labeled: bool,
}

/// Batch detection loss and per-item gradients w.r.t. the dense outputs.
/// Unlabeled items without pseudo labels contribute zero loss and zero
/// gradient.
pub fn detection_loss(
    items: &[DetectionLossItem<'_>],
    num_classes: usize,
    anchors: &[BBox],
    cfg: &LossConfig,
) -> Result<(LossValue, Vec<Vec<f64>>)> {
    let n_l = items.iter().filter(|i| i.labeled).count();
    let n_u = items.len() - n_l;
    if n_l == 0 && n_u == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut value = LossValue {
        term_counts: TermCounts {
            labeled_items: n_l,
            unlabeled_items: n_u,
            ..TermCounts::default()
        },
        ..LossValue::default()
    };
    let mut grads = Vec::with_capacity(items.len());
    for item in items {
        if !item.labeled && item.targets.is_empty() {
            check_len(anchors.len() * (num_classes + 4), item.outputs.len())?;
            value.term_counts.empty_unlabeled_items += 1;
            grads.push(vec![0.0; item.outputs.len()]);
            continue;
        }
        let (c, r, pos, mut g) = detection_image_loss(item.outputs, num_classes, anchors, item.targets, cfg)?;
        value.term_counts.positive_anchors += pos;
        let scale = if item.labeled {
            1.0 / n_l as f64
        } else {
            cfg.unsup_weight / n_u as f64
        };
        if item.labeled {
            value.supervised_part += (c + r) * scale;
        } else {
            value.unsupervised_part += (c + r) * scale;
        }
        g.iter_mut().for_each(|v| *v *= scale);
        grads.push(g);
    }
    value.total = value.supervised_part + value.unsupervised_part;
    Ok((value, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(c: [f64; 4]) -> BBox {
        BBox::try_from(c).unwrap()
    }

    #[test]
    fn multilabel_ce_examples() {
        let t = [1u8, 0, 1, 0, 0, 1, 1, 0];
        let perfect: Vec<f64> = t.iter().map(|&v| v as f64).collect();
        assert!(multilabel_ce(&perfect, &t).unwrap() < 1e-6);
        let half = [0.5; 8];
        assert!((multilabel_ce(&half, &t).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(matches!(
            multilabel_ce(&[0.5; 3], &t),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn focal_examples() {
        assert!(focal_loss(1.0, 1, 0.25, 2.0) < 1e-12);
        assert!((focal_loss(0.5, 1, 0.5, 0.0) - 0.5 * std::f64::consts::LN_2).abs() < 1e-12);
        let expected = 0.25 * 0.1f64.powi(2) * -(0.9f64.ln());
        assert!((focal_loss(0.9, 1, 0.25, 2.0) - expected).abs() < 1e-15);
        assert!((focal_loss(0.9, 1, 0.25, 2.0) - 2.634013e-4).abs() < 1e-10);
    }

    #[test]
    fn focal_gamma_zero_is_half_bce() {
        for &p in &[0.01, 0.2, 0.5, 0.77, 0.999] {
            for t in [0u8, 1] {
                let bce = multilabel_ce(&[p], &[t]).unwrap();
                assert!((focal_loss(p, t, 0.5, 0.0) - 0.5 * bce).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(&[1.0, 2.0], &[1.0, 2.0], 1.0).unwrap(), 0.0);
        assert!((smooth_l1(&[0.5], &[0.0], 1.0).unwrap() - 0.125).abs() < 1e-12);
        assert!((smooth_l1(&[2.0], &[0.0], 1.0).unwrap() - 1.5).abs() < 1e-12);
        assert!(smooth_l1(&[1.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn smooth_l1_is_c1_at_beta() {
        let beta = 0.3;
        let left = smooth_l1_grad(&[beta - 1e-12], &[0.0], beta).unwrap()[0];
        let right = smooth_l1_grad(&[beta + 1e-12], &[0.0], beta).unwrap()[0];
        assert!((left - 1.0).abs() < 1e-9 && (right - 1.0).abs() < 1e-9);
        let at = smooth_l1(&[beta], &[0.0], beta).unwrap();
        let below = smooth_l1(&[beta - 1e-12], &[0.0], beta).unwrap();
        assert!((at - below).abs() < 1e-11);
    }

    #[test]
    fn offsets_round_trip() {
        let anchor = BBox::from_center(3.5, 4.5, 4.0, 4.0).unwrap();
        let target = bx([1.0, 2.0, 6.0, 5.0]);
        let o = encode_offsets(&anchor, &target);
        let (cx, cy, w, h) = decode_offsets(&anchor, &o);
        let back = BBox::from_center(cx, cy, w, h).unwrap();
        for (a, b) in back.to_array().iter().zip(target.to_array()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matching_thresholds() {
        let anchors = vec![
            bx([0.0, 0.0, 4.0, 4.0]),   // identical to target: positive
            bx([1.0, 0.0, 5.0, 4.0]),   // IoU 12/20 = 0.6: positive
            bx([2.0, 0.0, 6.0, 4.0]),   // IoU 8/24 = 0.33: negative
            bx([10.0, 10.0, 14.0, 14.0]),
        ];
        let targets = vec![(2usize, bx([0.0, 0.0, 4.0, 4.0]))];
        let cfg = LossConfig::default();
        let m = match_anchors(&anchors, &targets, &cfg);
        assert_eq!(
            m,
            vec![
                AnchorMatch::Positive(0),
                AnchorMatch::Positive(0),
                AnchorMatch::Negative,
                AnchorMatch::Negative
            ]
        );
        // IoU 0.45 lands in the ignore band without low-quality promotion
        let a = vec![bx([0.0, 0.0, 4.0, 4.0]), bx([20.0, 20.0, 24.0, 24.0])];
        let t = vec![(0usize, bx([0.0, 0.0, 4.0, 1.8]))];
        let strict = LossConfig {
            low_quality_matches: false,
            ..cfg.clone()
        };
        assert_eq!(match_anchors(&a, &t, &strict)[0], AnchorMatch::Ignore);
        assert_eq!(match_anchors(&a, &t, &cfg)[0], AnchorMatch::Positive(0));
    }

    #[test]
    fn two_anchor_hand_composition() {
        let cfg = LossConfig::default();
        let anchors = vec![bx([0.0, 0.0, 4.0, 4.0]), bx([8.0, 8.0, 12.0, 12.0])];
        let target = bx([0.5, 0.0, 4.5, 4.0]);
        let targets = vec![(1usize, target)];
        // K = 2: [z0, z1, dx, dy, dw, dh] per anchor
        let outputs = vec![-1.0, 0.3, 0.1, 0.0, -0.05, 0.02, -2.0, 0.5, 0.0, 0.0, 0.0, 0.0];
        let (cls, reg, pos, _) = detection_image_loss(&outputs, 2, &anchors, &targets, &cfg).unwrap();
        assert_eq!(pos, 1);
        let (a, g) = (cfg.focal_alpha, cfg.focal_gamma);
        let hand_cls = focal_loss(sigmoid(-1.0), 0, a, g)
            + focal_loss(sigmoid(0.3), 1, a, g)
            + focal_loss(sigmoid(-2.0), 0, a, g)
            + focal_loss(sigmoid(0.5), 0, a, g);
        let tgt = [0.125, 0.0, 0.0, 0.0];
        let hand_reg = smooth_l1(&[0.1, 0.0, -0.05, 0.02], &tgt, cfg.smooth_l1_beta).unwrap();
        assert!((cls - hand_cls).abs() < 1e-14);
        assert!((reg - hand_reg).abs() < 1e-14);
    }

    #[test]
    fn exact_regression_gives_zero_reg_term() {
        let cfg = LossConfig::default();
        let anchors = vec![bx([0.0, 0.0, 4.0, 4.0])];
        let target = bx([0.0, 0.5, 3.0, 4.5]);
        let o = encode_offsets(&anchors[0], &target);
        let outputs = vec![3.0, o[0], o[1], o[2], o[3]];
        let (_, reg, pos, _) = detection_image_loss(&outputs, 1, &anchors, &[(0, target)], &cfg).unwrap();
        assert_eq!(pos, 1);
        assert_eq!(reg, 0.0);
    }

    #[test]
    fn batch_parts_and_empty_pseudo_items() {
        let cfg = LossConfig::default();
        let anchors = vec![bx([0.0, 0.0, 4.0, 4.0]), bx([4.0, 0.0, 8.0, 4.0])];
        let out = vec![0.2, -0.4, 0.1, 0.1, 0.0, 0.0, -3.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let t = vec![(0usize, bx([0.0, 0.0, 4.0, 4.0]))];
        let lab = DetectionLossItem { outputs: &out, targets: &t, labeled: true };
        let empty = DetectionLossItem { outputs: &out, targets: &[], labeled: false };
        let (v, grads) = detection_loss(&[lab, empty], 2, &anchors, &cfg).unwrap();
        assert_eq!(v.unsupervised_part, 0.0);
        assert_eq!(v.total, v.supervised_part);
        assert_eq!(v.term_counts.empty_unlabeled_items, 1);
        assert!(grads[1].iter().all(|&g| g == 0.0));
        assert!(matches!(detection_loss(&[], 2, &anchors, &cfg), Err(Error::EmptyBatch)));
    }

    #[test]
    fn report_batch_degenerate_parts() {
        let z = [0.3, -1.0, 2.0];
        let y = [1u8, 0, 1];
        let lab = ReportLossItem { logits: &z, targets: &y, labeled: true };
        let unl = ReportLossItem { logits: &z, targets: &[0, 0, 1], labeled: false };
        let (only_l, _) = report_loss(&[lab], 1.0).unwrap();
        assert_eq!(only_l.unsupervised_part, 0.0);
        assert_eq!(only_l.total, only_l.supervised_part);
        let (only_u, _) = report_loss(&[unl], 1.0).unwrap();
        assert_eq!(only_u.supervised_part, 0.0);
        let (mixed, _) = report_loss(&[lab, unl], 1.0).unwrap();
        assert!((mixed.total - (only_l.total + only_u.total)).abs() < 1e-12);
        assert!(matches!(report_loss(&[], 1.0), Err(Error::EmptyBatch)));
    }
}
