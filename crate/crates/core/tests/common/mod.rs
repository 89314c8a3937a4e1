//! Reference implementations written independently of the library, plus
//! random instance generators shared by the integration tests.

#![allow(dead_code)]

use coevo_core::geometry::BBox;
use coevo_core::suppression::Detection;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn raw_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area = |c: [f64; 4]| (c[2] - c[0]) * (c[3] - c[1]);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Strict rank: higher score, then lower category, then smaller
/// coordinates, then earlier position.
fn before(a: (&Detection, usize), b: (&Detection, usize)) -> bool {
    if a.0.score != b.0.score {
        return a.0.score > b.0.score;
    }
    if a.0.category != b.0.category {
        return a.0.category < b.0.category;
    }
    let (ca, cb) = (a.0.bbox.to_array(), b.0.bbox.to_array());
    for i in 0..4 {
        if ca[i] != cb[i] {
            return ca[i] < cb[i];
        }
    }
    a.1 < b.1
}

/// O(n^2) NMS: compute each detection's rank by counting, then decide in
/// rank order whether any kept, higher-ranked, same-class box overlaps it.
pub fn oracle_nms(items: &[Detection], iou_thr: f64) -> Vec<Detection> {
    let n = items.len();
    let rank: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&j| before((&items[j], j), (&items[i], i))).count())
        .collect();
    let mut by_rank = vec![0usize; n];
    for i in 0..n {
        by_rank[rank[i]] = i;
    }
    let mut kept = vec![false; n];
    for &i in &by_rank {
        let blocked = (0..n).any(|j| {
            kept[j]
                && items[j].category == items[i].category
                && raw_iou(items[j].bbox.to_array(), items[i].bbox.to_array()) > iou_thr
        });
        kept[i] = !blocked;
    }
    by_rank.into_iter().filter(|&i| kept[i]).map(|i| items[i]).collect()
}

/// Canonical multiset form for set comparisons.
pub fn canonical(items: &[Detection]) -> Vec<(u64, usize, [u64; 4])> {
    let mut v: Vec<_> = items
        .iter()
        .map(|d| (d.score.to_bits(), d.category, d.bbox.to_array().map(f64::to_bits)))
        .collect();
    v.sort();
    v
}

/// One prediction `(category, box, score)` or ground truth `(category, box)`.
pub type Pred = (usize, [f64; 4], f64);
pub type Gt = (usize, [f64; 4]);

/// Brute-force mAP: greedy matching per class and all-point AP written as
/// the mean, over ground-truth boxes, of the best precision reached at or
/// after the rank where each one is recalled (zero if never recalled).
pub fn brute_map(preds: &[Vec<Pred>], gts: &[Vec<Gt>], num_classes: usize, iou_thr: f64) -> Option<f64> {
    let mut aps = Vec::new();
    for c in 0..num_classes {
        let mut cp: Vec<(usize, usize, [f64; 4], f64)> = Vec::new();
        let mut seq = 0;
        for (img, ps) in preds.iter().enumerate() {
            for p in ps.iter().filter(|p| p.0 == c) {
                cp.push((seq, img, p.1, p.2));
                seq += 1;
            }
        }
        let cg: Vec<(usize, [f64; 4])> = gts
            .iter()
            .enumerate()
            .flat_map(|(img, gs)| gs.iter().filter(|g| g.0 == c).map(move |g| (img, g.1)))
            .collect();
        if cg.is_empty() {
            continue;
        }
        // selection by repeated maximum instead of sorting
        let mut done = vec![false; cp.len()];
        let mut used = vec![false; cg.len()];
        let mut flags = Vec::new();
        for _ in 0..cp.len() {
            let mut pick: Option<usize> = None;
            for i in 0..cp.len() {
                if done[i] {
                    continue;
                }
                pick = match pick {
                    None => Some(i),
                    Some(j) if cp[i].3 > cp[j].3 || (cp[i].3 == cp[j].3 && cp[i].0 < cp[j].0) => Some(i),
                    keep => keep,
                };
            }
            let i = pick.unwrap();
            done[i] = true;
            let mut best: Option<(usize, f64)> = None;
            for (g, &(img, b)) in cg.iter().enumerate() {
                if img != cp[i].1 || used[g] {
                    continue;
                }
                let v = raw_iou(cp[i].2, b);
                if best.map_or(true, |(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
            match best {
                Some((g, v)) if v >= iou_thr => {
                    used[g] = true;
                    flags.push(true);
                }
                _ => flags.push(false),
            }
        }
        let mut precision = Vec::new();
        let mut tp = 0.0;
        for (k, &f) in flags.iter().enumerate() {
            if f {
                tp += 1.0;
            }
            precision.push(tp / (k + 1) as f64);
        }
        let mut total = 0.0;
        for (k, &f) in flags.iter().enumerate() {
            if f {
                total += precision[k..].iter().cloned().fold(0.0, f64::max);
            }
        }
        aps.push(total / cg.len() as f64);
    }
    if aps.is_empty() {
        None
    } else {
        Some(aps.iter().sum::<f64>() / aps.len() as f64)
    }
}

pub fn random_box(rng: &mut ChaCha8Rng, extent: f64, max_side: f64, integer: bool) -> BBox {
    let mut coord = |hi: f64| {
        let v = rng.random::<f64>() * hi;
        if integer {
            v.floor()
        } else {
            v
        }
    };
    let w = coord(max_side - 1.0) + 1.0;
    let h = coord(max_side - 1.0) + 1.0;
    let x = coord(extent - w);
    let y = coord(extent - h);
    BBox::new(x, y, x + w, y + h).unwrap()
}

pub fn random_detections(rng: &mut ChaCha8Rng, n: usize, num_classes: usize, tied_scores: bool) -> Vec<Detection> {
    (0..n)
        .map(|_| {
            let bbox = random_box(rng, 32.0, 12.0, tied_scores);
            let score = if tied_scores {
                rng.random_range(1..=5) as f64 / 5.0
            } else {
                rng.random::<f64>()
            };
            Detection::new(bbox, rng.random_range(0..num_classes), score, num_classes).unwrap()
        })
        .collect()
}

/// Central finite differences of `f` at `x`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest coordinate-wise relative error, with an absolute floor of
/// `1e-8` for near-zero components.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4))
        .fold(0.0, f64::max)
}
