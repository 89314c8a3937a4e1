//! Cross-modal pseudo-label filters.
//!
//! [`rpdlr`] keeps only the pseudo boxes whose category the paired report
//! mentions; [`apclr`] keeps only the report pseudo classes that the paired
//! image shows. Both are pure set filters on category ids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::suppression::{DetectionSet, Source};

/// Largest category universe a [`ClassSet`] can hold.
pub const MAX_CLASSES: usize = 64;

/// Set of category ids drawn from `[0, num_classes)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassSet {
    bits: u64,
    num_classes: usize,
}

impl ClassSet {
    pub fn empty(num_classes: usize) -> Self {
        assert!(num_classes <= MAX_CLASSES, "at most {MAX_CLASSES} classes");
        ClassSet {
            bits: 0,
            num_classes,
        }
    }

    pub fn full(num_classes: usize) -> Self {
        let mut s = ClassSet::empty(num_classes);
        s.bits = if num_classes == 64 {
            u64::MAX
        } else {
            (1u64 << num_classes) - 1
        };
        s
    }

    pub fn from_ids(num_classes: usize, ids: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut s = ClassSet::empty(num_classes);
        for id in ids {
            s.insert(id)?;
        }
        Ok(s)
    }

    /// Set of indices whose entry is 1.
    pub fn from_binary(labels: &[u8]) -> Self {
        let mut s = ClassSet::empty(labels.len());
        for (c, &v) in labels.iter().enumerate() {
            if v != 0 {
                s.bits |= 1 << c;
            }
        }
        s
    }

    pub fn insert(&mut self, id: usize) -> Result<()> {
        if id >= self.num_classes {
            return Err(Error::Config(format!(
                "category {id} outside [0, {})",
                self.num_classes
            )));
        }
        self.bits |= 1 << id;
        Ok(())
    }

    pub fn contains(&self, id: usize) -> bool {
        id < self.num_classes && self.bits & (1 << id) != 0
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn is_subset(&self, other: &ClassSet) -> bool {
        self.bits & !other.bits == 0
    }

    pub fn intersection(&self, other: &ClassSet) -> ClassSet {
        ClassSet {
            bits: self.bits & other.bits,
            num_classes: self.num_classes,
        }
    }

    pub fn union(&self, other: &ClassSet) -> ClassSet {
        ClassSet {
            bits: self.bits | other.bits,
            num_classes: self.num_classes.max(other.num_classes),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_classes).filter(move |&c| self.contains(c))
    }

    /// Dense 0/1 vector of length `num_classes`.
    pub fn to_binary(&self) -> Vec<u8> {
        (0..self.num_classes).map(|c| self.contains(c) as u8).collect()
    }
}

/// Audit record for one refinement call.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub kept: usize,
    pub dropped: usize,
    /// One entry per dropped item.
    pub dropped_categories: Vec<usize>,
}

impl RefinementReport {
    pub fn merge(&mut self, other: &RefinementReport) {
        self.kept += other.kept;
        self.dropped += other.dropped;
        self.dropped_categories
            .extend_from_slice(&other.dropped_categories);
    }
}

/// Report-guided refinement of detection pseudo labels.
pub fn rpdlr(pseudo_dets: &DetectionSet, report_classes: &ClassSet) -> (DetectionSet, RefinementReport) {
    debug_assert!(matches!(
        pseudo_dets.source,
        Source::Teacher | Source::SaNms | Source::Refined
    ));
    let mut report = RefinementReport::default();
    let mut kept = Vec::with_capacity(pseudo_dets.len());
    for d in &pseudo_dets.items {
        if report_classes.contains(d.category) {
            kept.push(*d);
        } else {
            report.dropped_categories.push(d.category);
        }
    }
    report.kept = kept.len();
    report.dropped = report.dropped_categories.len();
    (DetectionSet::new(kept, Source::Refined), report)
}

/// Categories of detections scoring at least `det_score_floor`.
pub fn detected_categories(detected: &DetectionSet, num_classes: usize, det_score_floor: f64) -> ClassSet {
    let mut s = ClassSet::empty(num_classes);
    for d in detected.iter().filter(|d| d.score >= det_score_floor) {
        // categories out of range are impossible for validated detections
        let _ = s.insert(d.category);
    }
    s
}

/// Abnormality-guided refinement of report pseudo classes.
pub fn apclr(
    pseudo_classes: &ClassSet,
    detected: &DetectionSet,
    det_score_floor: f64,
) -> (ClassSet, RefinementReport) {
    let guide = detected_categories(detected, pseudo_classes.num_classes(), det_score_floor);
    apclr_with_guide(pseudo_classes, &guide)
}

/// [`apclr`] when the detected-category set has already been computed.
pub fn apclr_with_guide(pseudo_classes: &ClassSet, guide: &ClassSet) -> (ClassSet, RefinementReport) {
    let kept = pseudo_classes.intersection(guide);
    let dropped_categories: Vec<usize> = pseudo_classes.iter().filter(|&c| !kept.contains(c)).collect();
    let report = RefinementReport {
        kept: kept.len(),
        dropped: dropped_categories.len(),
        dropped_categories,
    };
    (kept, report)
}

pub fn classify_to_classset(probs: &[f64], class_threshold: f64) -> ClassSet {
    let mut s = ClassSet::empty(probs.len());
    for (c, &p) in probs.iter().enumerate() {
        if p >= class_threshold {
            s.bits |= 1 << c;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::suppression::Detection;

    fn dets(cats: &[(usize, f64)]) -> DetectionSet {
        let items = cats
            .iter()
            .enumerate()
            .map(|(i, &(c, s))| {
                let x = i as f64;
                Detection::new(BBox::new(x, 0.0, x + 1.0, 1.0).unwrap(), c, s, 8).unwrap()
            })
            .collect();
        DetectionSet::new(items, Source::Teacher)
    }

    fn set(ids: &[usize]) -> ClassSet {
        ClassSet::from_ids(8, ids.iter().copied()).unwrap()
    }

    #[test]
    fn rpdlr_examples() {
        let input = dets(&[(1, 0.9), (1, 0.8), (3, 0.7)]);
        let (out, rep) = rpdlr(&input, &set(&[1]));
        assert_eq!(out.items, input.items[..2].to_vec());
        assert_eq!(out.source, Source::Refined);
        assert_eq!((rep.kept, rep.dropped), (2, 1));
        assert_eq!(rep.dropped_categories, vec![3]);

        let (out, rep) = rpdlr(&input, &ClassSet::empty(8));
        assert!(out.is_empty());
        assert_eq!(rep.dropped, 3);

        let (out, _) = rpdlr(&input, &ClassSet::full(8));
        assert_eq!(out.items, input.items);
    }

    #[test]
    fn apclr_examples() {
        let detected = dets(&[(2, 0.9), (5, 0.8), (7, 0.6)]);
        let (out, rep) = apclr(&set(&[0, 2, 5]), &detected, 0.5);
        assert_eq!(out, set(&[2, 5]));
        assert_eq!(rep.dropped_categories, vec![0]);

        let weak = dets(&[(2, 0.3), (5, 0.1)]);
        assert!(apclr(&set(&[2, 5]), &weak, 0.5).0.is_empty());

        assert_eq!(apclr(&set(&[2, 7]), &detected, 0.5).0, set(&[2, 7]));
    }

    #[test]
    fn classify_examples() {
        assert!(classify_to_classset(&[0.0; 8], 0.5).is_empty());
        assert_eq!(classify_to_classset(&[1.0; 8], 0.5), ClassSet::full(8));
        assert_eq!(
            classify_to_classset(&[0.9, 0.4, 0.6], 0.5),
            ClassSet::from_ids(3, [0, 2]).unwrap()
        );
    }

    #[test]
    fn class_set_bounds() {
        assert!(ClassSet::from_ids(8, [8]).is_err());
        assert_eq!(ClassSet::full(64).len(), 64);
        assert_eq!(set(&[1, 4]).to_binary(), vec![0, 1, 0, 0, 1, 0, 0, 0]);
        assert_eq!(ClassSet::from_binary(&[0, 1, 0, 0, 1, 0, 0, 0]), set(&[1, 4]));
    }
}
