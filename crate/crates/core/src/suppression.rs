//! Class-aware greedy NMS and the self-adaptive variant that merges teacher
//! pseudo labels with confident student predictions before suppressing.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub category: usize,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BBox, category: usize, score: f64, num_classes: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Config(format!("detection score {score} outside [0, 1]")));
        }
        if category >= num_classes {
            return Err(Error::Config(format!(
                "category {category} outside [0, {num_classes})"
            )));
        }
        Ok(Detection {
            bbox,
            category,
            score,
        })
    }
}

/// Where a set of detections came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Teacher,
    Student,
    SaNms,
    Refined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub items: Vec<Detection>,
    pub source: Source,
}

impl DetectionSet {
    pub fn new(items: Vec<Detection>, source: Source) -> Self {
        DetectionSet { items, source }
    }

    pub fn empty(source: Source) -> Self {
        DetectionSet {
            items: Vec::new(),
            source,
        }
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = source;
        self
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Detection> {
        self.items.iter()
    }
}

/// Descending score; ties by lower category, then box coordinates.
pub fn rank_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.category.cmp(&b.category))
        .then_with(|| a.bbox.lexicographic_cmp(&b.bbox))
}

pub fn nms(dets: &DetectionSet, iou_threshold: f64) -> DetectionSet {
    DetectionSet::new(nms_items(&dets.items, iou_threshold), dets.source)
}

fn nms_items(items: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<Detection> = items.to_vec();
    order.sort_by(rank_order);

    let mut suppressed = vec![false; order.len()];
    let mut keep = Vec::new();
    for i in 0..order.len() {
        if suppressed[i] {
            continue;
        }
        let anchor = order[i];
        keep.push(anchor);
        for j in (i + 1)..order.len() {
            if !suppressed[j]
                && order[j].category == anchor.category
                && anchor.bbox.iou(&order[j].bbox) > iou_threshold
            {
                suppressed[j] = true;
            }
        }
    }
    keep
}

/// NMS over the teacher's pseudo labels plus every student prediction
/// scoring at least `student_score_floor`.
pub fn sa_nms(
    teacher: &DetectionSet,
    student: &DetectionSet,
    iou_threshold: f64,
    student_score_floor: f64,
) -> DetectionSet {
    debug_assert_eq!(teacher.source, Source::Teacher);
    debug_assert_eq!(student.source, Source::Student);
    let mut pool: Vec<Detection> = teacher.items.clone();
    pool.extend(
        student
            .items
            .iter()
            .filter(|d| d.score >= student_score_floor)
            .copied(),
    );
    DetectionSet::new(nms_items(&pool, iou_threshold), Source::SaNms)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn det(c: [f64; 4], category: usize, score: f64) -> Detection {
        Detection::new(BBox::try_from(c).unwrap(), category, score, 8).unwrap()
    }

    /// Brute force: a detection survives iff no surviving detection ranked
    /// above it (same class) overlaps it past the threshold. Evaluated by
    /// walking candidates in rank order and re-scanning every earlier keeper.
    fn oracle_nms(items: &[Detection], thr: f64) -> Vec<Detection> {
        let mut ranked = items.to_vec();
        // insertion sort keeps this independent of the library ordering code
        for i in 1..ranked.len() {
            let mut j = i;
            while j > 0 && outranks(&ranked[j], &ranked[j - 1]) {
                ranked.swap(j, j - 1);
                j -= 1;
            }
        }
        let mut kept: Vec<Detection> = Vec::new();
        for cand in ranked {
            let blocked = kept.iter().any(|k| {
                k.category == cand.category && {
                    let ix = (k.bbox.x_max().min(cand.bbox.x_max()) - k.bbox.x_min().max(cand.bbox.x_min())).max(0.0);
                    let iy = (k.bbox.y_max().min(cand.bbox.y_max()) - k.bbox.y_min().max(cand.bbox.y_min())).max(0.0);
                    let inter = ix * iy;
                    let union = k.bbox.area() + cand.bbox.area() - inter;
                    inter / union > thr
                }
            });
            if !blocked {
                kept.push(cand);
            }
        }
        kept
    }

    fn outranks(a: &Detection, b: &Detection) -> bool {
        if a.score != b.score {
            return a.score > b.score;
        }
        if a.category != b.category {
            return a.category < b.category;
        }
        let (x, y) = (a.bbox.to_array(), b.bbox.to_array());
        for k in 0..4 {
            if x[k] != y[k] {
                return x[k] < y[k];
            }
        }
        false
    }

    #[test]
    fn single_detection_kept() {
        let s = DetectionSet::new(vec![det([0.0, 0.0, 2.0, 2.0], 1, 0.4)], Source::Teacher);
        assert_eq!(nms(&s, 0.5), s);
    }

    #[test]
    fn empty_in_empty_out() {
        assert!(nms(&DetectionSet::empty(Source::Teacher), 0.5).is_empty());
        let out = sa_nms(
            &DetectionSet::empty(Source::Teacher),
            &DetectionSet::empty(Source::Student),
            0.5,
            0.5,
        );
        assert!(out.is_empty());
        assert_eq!(out.source, Source::SaNms);
    }

    #[test]
    fn colocated_same_class_keeps_higher() {
        let s = DetectionSet::new(
            vec![det([0.0, 0.0, 2.0, 2.0], 3, 0.8), det([0.0, 0.0, 2.0, 2.0], 3, 0.9)],
            Source::Teacher,
        );
        let out = nms(&s, 0.5);
        assert_eq!(out.items, vec![det([0.0, 0.0, 2.0, 2.0], 3, 0.9)]);
    }

    #[test]
    fn different_classes_never_suppress() {
        let s = DetectionSet::new(
            vec![det([0.0, 0.0, 2.0, 2.0], 3, 0.8), det([0.0, 0.0, 2.0, 2.0], 4, 0.9)],
            Source::Teacher,
        );
        assert_eq!(nms(&s, 0.5).len(), 2);
    }

    #[test]
    fn sa_nms_student_empty_equals_teacher_nms() {
        let t = DetectionSet::new(
            vec![
                det([0.0, 0.0, 4.0, 4.0], 2, 0.6),
                det([0.5, 0.0, 4.0, 4.0], 2, 0.7),
                det([8.0, 8.0, 9.0, 9.0], 1, 0.3),
            ],
            Source::Teacher,
        );
        let out = sa_nms(&t, &DetectionSet::empty(Source::Student), 0.5, 0.5);
        assert_eq!(out.items, nms(&t, 0.5).items);
    }

    #[test]
    fn confident_student_replaces_teacher() {
        // IoU([0,0,10,10], [1,0,10,10]) = 0.9 > 0.5
        let teacher_box = det([0.0, 0.0, 10.0, 10.0], 2, 0.6);
        let student_box = det([1.0, 0.0, 10.0, 10.0], 2, 0.95);
        assert!(teacher_box.bbox.iou(&student_box.bbox) > 0.5);
        let out = sa_nms(
            &DetectionSet::new(vec![teacher_box], Source::Teacher),
            &DetectionSet::new(vec![student_box], Source::Student),
            0.5,
            0.5,
        );
        assert_eq!(out.items, vec![student_box]);
    }

    #[test]
    fn disjoint_teacher_and_student_both_kept() {
        let out = sa_nms(
            &DetectionSet::new(vec![det([0.0, 0.0, 2.0, 2.0], 2, 0.6)], Source::Teacher),
            &DetectionSet::new(vec![det([5.0, 5.0, 7.0, 7.0], 2, 0.9)], Source::Student),
            0.5,
            0.5,
        );
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn unconfident_student_ignored() {
        let t = DetectionSet::new(vec![det([0.0, 0.0, 2.0, 2.0], 2, 0.6)], Source::Teacher);
        let s = DetectionSet::new(vec![det([0.0, 0.0, 2.0, 2.0], 2, 0.49)], Source::Student);
        assert_eq!(sa_nms(&t, &s, 0.5, 0.5).items, t.items);
    }

    fn arb_dets(max: usize) -> impl Strategy<Value = Vec<Detection>> {
        prop::collection::vec(
            (0.0..12.0f64, 0.0..12.0f64, 0.5..6.0f64, 0.5..6.0f64, 0usize..8, 0.0..=1.0f64),
            0..=max,
        )
        .prop_map(|v| {
            v.into_iter()
                .map(|(x, y, w, h, c, s)| det([x, y, x + w, y + h], c, s))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn nms_matches_oracle(items in arb_dets(50), thr in 0.05..=1.0f64) {
            let got = nms(&DetectionSet::new(items.clone(), Source::Teacher), thr);
            prop_assert_eq!(got.items, oracle_nms(&items, thr));
        }

        #[test]
        fn nms_output_laws(items in arb_dets(40), thr in 0.1..0.9f64) {
            let once = nms(&DetectionSet::new(items.clone(), Source::Teacher), thr);
            for (i, a) in once.items.iter().enumerate() {
                prop_assert!(items.contains(a));
                for b in &once.items[i + 1..] {
                    prop_assert!(a.category != b.category || a.bbox.iou(&b.bbox) <= thr);
                }
            }
            for w in once.items.windows(2) {
                prop_assert!(w[0].score >= w[1].score);
            }
            prop_assert_eq!(nms(&once, thr), once);
        }

        #[test]
        fn sa_nms_subset_and_floor_reduction(t in arb_dets(25), s in arb_dets(25), thr in 0.1..0.9f64) {
            let ts = DetectionSet::new(t.clone(), Source::Teacher);
            let ss = DetectionSet::new(s.clone(), Source::Student);
            let merged = sa_nms(&ts, &ss, thr, 0.5);
            for d in &merged.items {
                prop_assert!(t.contains(d) || s.contains(d));
            }
            let closed = sa_nms(&ts, &ss, thr, 1.0 + 1e-9);
            prop_assert_eq!(closed.items, nms(&ts, thr).items);
        }
    }
}
