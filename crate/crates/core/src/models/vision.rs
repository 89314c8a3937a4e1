//! Anchor-grid linear detector.
//!
//! One anchor per grid cell: a square of side `anchor_size` centred on the
//! cell. Each anchor sees a fixed feature vector
//!
//! ```text
//! [ cell channels (C) | 3x3 mean channels (C) | band profile (4R) | runs (4) | depth (2) | 1 ]
//! ```
//!
//! The band profile holds channel 0 averaged across a 3-cell band
//! perpendicular to each direction (left, right, up, down) at offsets
//! 1..=R. A run counts how many consecutive profile entries reach
//! `run_threshold`; depth is the smaller run of each opposite pair. Class
//! logits and `(dx, dy, dw, dh)` box offsets are all linear in these
//! features.

use serde::{Deserialize, Serialize};

use super::{ModelHandle, Role};
use crate::error::{Error, Result};
use crate::geometry::{clamp_box, BBox};
use crate::losses::{decode_offsets, detection_loss, sigmoid, DetectionLossItem, LossConfig, LossValue};
use crate::suppression::{nms, Detection, DetectionSet, Source};
use crate::synthdata::ImageFeatures;

/// Per-class NMS IoU applied when a model acts as a guide or teacher.
pub const INFERENCE_NMS_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisionArch {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub num_classes: usize,
    pub anchor_size: f64,
    pub reach: usize,
    pub run_threshold: f64,
}

impl VisionArch {
    pub fn feature_dim(&self) -> usize {
        2 * self.channels + 4 * self.reach + 7
    }

    pub fn num_outputs(&self) -> usize {
        self.num_classes + 4
    }

    pub fn num_anchors(&self) -> usize {
        self.height * self.width
    }

    pub fn num_params(&self) -> usize {
        self.feature_dim() * self.num_outputs()
    }

    /// Parameter index of the bias feeding output `o`.
    pub fn bias_index(&self, output: usize) -> usize {
        output * self.feature_dim() + self.feature_dim() - 1
    }

    /// Anchor boxes in row-major cell order.
    pub fn anchors(&self) -> Vec<BBox> {
        let mut out = Vec::with_capacity(self.num_anchors());
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(
                    BBox::from_center(x as f64 + 0.5, y as f64 + 0.5, self.anchor_size, self.anchor_size)
                        .expect("anchor size is positive"),
                );
            }
        }
        out
    }

    pub fn check_image(&self, image: &ImageFeatures) -> Result<()> {
        if image.height != self.height || image.width != self.width || image.channels != self.channels {
            return Err(Error::Shape(format!(
                "model expects {}x{}x{} images, got {}x{}x{}",
                self.height, self.width, self.channels, image.height, image.width, image.channels
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 || self.num_classes == 0 {
            return Err(Error::Config("vision arch dimensions must be positive".into()));
        }
        if !(self.anchor_size > 0.0) {
            return Err(Error::Config("anchor_size must be positive".into()));
        }
        Ok(())
    }
}

/// Anchor features of one image, anchor-major (`num_anchors x feature_dim`).
#[derive(Debug, Clone)]
pub struct AnchorFeatures {
    pub values: Vec<f64>,
    pub dim: usize,
}

pub fn anchor_features(arch: &VisionArch, image: &ImageFeatures) -> Result<AnchorFeatures> {
    arch.check_image(image)?;
    let (h, w, c, r) = (arch.height, arch.width, arch.channels, arch.reach);
    let dim = arch.feature_dim();
    let mut values = vec![0.0; arch.num_anchors() * dim];
    let ch0 = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            image.at(y as usize, x as usize, 0) as f64
        }
    };
    // (dy, dx) step of each direction: left, right, up, down
    const DIRS: [(isize, isize); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];
    for y in 0..h {
        for x in 0..w {
            let row = &mut values[(y * w + x) * dim..(y * w + x + 1) * dim];
            for ch in 0..c {
                row[ch] = image.at(y, x, ch) as f64;
            }
            for ny in y.saturating_sub(1)..(y + 2).min(h) {
                for nx in x.saturating_sub(1)..(x + 2).min(w) {
                    for ch in 0..c {
                        row[c + ch] += image.at(ny, nx, ch) as f64 / 9.0;
                    }
                }
            }
            let base = 2 * c;
            let runs = base + 4 * r;
            let (yi, xi) = (y as isize, x as isize);
            for (d, &(sy, sx)) in DIRS.iter().enumerate() {
                let mut running = true;
                for k in 1..=r {
                    let ki = k as isize;
                    let (cy, cx) = (yi + sy * ki, xi + sx * ki);
                    // perpendicular band of three cells
                    let band = (-1..=1)
                        .map(|o| ch0(cy + sx.abs() * o, cx + sy.abs() * o))
                        .sum::<f64>()
                        / 3.0;
                    row[base + d * r + k - 1] = band;
                    if running && band >= arch.run_threshold {
                        row[runs + d] += 1.0;
                    } else {
                        running = false;
                    }
                }
            }
            row[runs + 4] = row[runs].min(row[runs + 1]);
            row[runs + 5] = row[runs + 2].min(row[runs + 3]);
            row[dim - 1] = 1.0;
        }
    }
    Ok(AnchorFeatures { values, dim })
}

/// Dense outputs, anchor-major: `[logits (K) | dx dy dw dh]` per anchor.
pub fn forward(model: &ModelHandle, feats: &AnchorFeatures) -> Result<Vec<f64>> {
    let arch = vision_arch(model)?;
    let (dim, outs) = (arch.feature_dim(), arch.num_outputs());
    if feats.dim != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: feats.dim,
        });
    }
    let params = model.params();
    let n_anchors = feats.values.len() / dim;
    let mut out = vec![0.0; n_anchors * outs];
    for a in 0..n_anchors {
        let phi = &feats.values[a * dim..(a + 1) * dim];
        for o in 0..outs {
            let w = &params[o * dim..(o + 1) * dim];
            out[a * outs + o] = w.iter().zip(phi).map(|(wi, xi)| wi * xi).sum();
        }
    }
    Ok(out)
}

/// Accumulate `d loss / d params` given `d loss / d outputs`.
pub fn backprop(arch: &VisionArch, feats: &AnchorFeatures, grad_outputs: &[f64], grad: &mut [f64]) {
    let (dim, outs) = (arch.feature_dim(), arch.num_outputs());
    let n_anchors = feats.values.len() / dim;
    for a in 0..n_anchors {
        let phi = &feats.values[a * dim..(a + 1) * dim];
        let g = &grad_outputs[a * outs..(a + 1) * outs];
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            let slot = &mut grad[o * dim..(o + 1) * dim];
            for (s, x) in slot.iter_mut().zip(phi) {
                *s += go * x;
            }
        }
    }
}

/// Turn dense outputs into scored, image-clamped detections.
pub fn decode(arch: &VisionArch, anchors: &[BBox], outputs: &[f64], score_threshold: f64, nms_iou: Option<f64>) -> DetectionSet {
    let outs = arch.num_outputs();
    let k = arch.num_classes;
    let mut items = Vec::new();
    for (a, anchor) in anchors.iter().enumerate() {
        let row = &outputs[a * outs..(a + 1) * outs];
        let mut bbox: Option<BBox> = None;
        for (c, &z) in row[..k].iter().enumerate() {
            let p = sigmoid(z);
            if p < score_threshold {
                continue;
            }
            let b = match bbox {
                Some(b) => b,
                None => {
                    let (cx, cy, w, h) = decode_offsets(anchor, &row[k..]);
                    let corners = [cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h];
                    let Some(b) = clamp_box(corners, arch.width as f64, arch.height as f64) else {
                        break;
                    };
                    bbox = Some(b);
                    b
                }
            };
            items.push(Detection {
                bbox: b,
                category: c,
                score: p,
            });
        }
    }
    let set = DetectionSet::new(items, Source::Student);
    match nms_iou {
        Some(thr) => nms(&set, thr),
        None => set,
    }
}

/// Detections of a vision model on one image. Output boxes lie inside the
/// image and every score is at least `score_threshold`.
pub fn vision_predict(model: &ModelHandle, image: &ImageFeatures, score_threshold: f64, nms_iou: Option<f64>) -> Result<DetectionSet> {
    let arch = vision_arch(model)?;
    let feats = anchor_features(arch, image)?;
    let outputs = forward(model, &feats)?;
    Ok(decode(arch, &arch.anchors(), &outputs, score_threshold, nms_iou))
}

pub(crate) fn vision_arch(model: &ModelHandle) -> Result<&VisionArch> {
    model.expect_role(Role::Vision)?;
    match &model.arch {
        super::Arch::Vision(a) => Ok(a),
        super::Arch::Report(_) => unreachable!("role checked above"),
    }
}

/// One image in a vision gradient batch.
pub struct VisionItem<'a> {
    pub image: &'a ImageFeatures,
    pub targets: Vec<(usize, BBox)>,
    pub labeled: bool,
}

pub fn loss_and_gradient(model: &ModelHandle, items: &[VisionItem<'_>], cfg: &LossConfig) -> Result<(LossValue, Vec<f64>)> {
    let arch = vision_arch(model)?;
    let anchors = arch.anchors();
    let mut feats = Vec::with_capacity(items.len());
    let mut outputs = Vec::with_capacity(items.len());
    for item in items {
        let f = anchor_features(arch, item.image)?;
        outputs.push(forward(model, &f)?);
        feats.push(f);
    }
    let loss_items: Vec<DetectionLossItem<'_>> = items
        .iter()
        .zip(&outputs)
        .map(|(it, out)| DetectionLossItem {
            outputs: out,
            targets: &it.targets,
            labeled: it.labeled,
        })
        .collect();
    let (value, grads) = detection_loss(&loss_items, arch.num_classes, &anchors, cfg)?;
    let mut grad = vec![0.0; arch.num_params()];
    for (f, g) in feats.iter().zip(&grads) {
        backprop(arch, f, g, &mut grad);
    }
    Ok((value, grad))
}
