//! Guides that read the ground truth instead of running a model. Used to
//! measure what a refinement step can gain with a perfect partner modality.

use super::{ReportGuide, VisionGuide};
use crate::error::Result;
use crate::suppression::{Detection, DetectionSet, Source};
use crate::synthdata::{multi_hot, PairedSample};

/// Detects every true abnormality with score 1.
#[derive(Debug, Clone, Copy)]
pub struct OracleVision;

impl VisionGuide for OracleVision {
    fn detect(&self, sample: &PairedSample, score_threshold: f64) -> Result<DetectionSet> {
        let items = if score_threshold <= 1.0 {
            sample
                .truth()
                .iter()
                .map(|a| Detection {
                    bbox: a.bbox,
                    category: a.category,
                    score: 1.0,
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(DetectionSet::new(items, Source::Student))
    }
}

/// Returns the true multi-hot category vector as probabilities.
#[derive(Debug, Clone, Copy)]
pub struct OracleReport {
    pub num_classes: usize,
}

impl ReportGuide for OracleReport {
    fn classify(&self, sample: &PairedSample) -> Result<Vec<f64>> {
        Ok(multi_hot(sample.truth(), self.num_classes)
            .into_iter()
            .map(f64::from)
            .collect())
    }
}

/// Reports every category present everywhere; makes RPDLR the identity.
#[derive(Debug, Clone, Copy)]
pub struct AllCategoriesReport {
    pub num_classes: usize,
}

impl ReportGuide for AllCategoriesReport {
    fn classify(&self, _sample: &PairedSample) -> Result<Vec<f64>> {
        Ok(vec![1.0; self.num_classes])
    }
}

/// Detects every category on every image with one full-image box; makes
/// APCLR the identity.
#[derive(Debug, Clone, Copy)]
pub struct AllCategoriesVision {
    pub num_classes: usize,
}

impl VisionGuide for AllCategoriesVision {
    fn detect(&self, sample: &PairedSample, _score_threshold: f64) -> Result<DetectionSet> {
        let full = crate::geometry::BBox::new(0.0, 0.0, sample.image.width as f64, sample.image.height as f64)?;
        Ok(DetectionSet::new(
            (0..self.num_classes)
                .map(|category| Detection {
                    bbox: full,
                    category,
                    score: 1.0,
                })
                .collect(),
            Source::Student,
        ))
    }
}
