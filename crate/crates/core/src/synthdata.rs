//! Seeded generator of paired image/report samples.
//!
//! Each sample carries 0..=`max_abnormalities` abnormalities. An abnormality
//! of category `c` adds a visual signature inside its box: channel 0 rises by
//! the signature amplitude and channels `1..C` carry a ±amplitude binary code
//! of `c`. The paired report mentions each present category's keywords unless
//! dropped, plus negated mentions of absent categories and filler tokens.
//!
//! Only the labeled splits expose their annotation; unlabeled samples keep
//! theirs as `latent` ground truth, reachable only by oracle guides, noise
//! injection and tests.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clamp_box, BBox};
use crate::refine::{ClassSet, MAX_CLASSES};
use crate::seed::rng_for;
use crate::suppression::{Detection, DetectionSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub num_samples: usize,
    pub labeled_fraction: f64,
    pub num_classes: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub signature_amplitude: f64,
    pub noise_sigma: f64,
    pub max_abnormalities: usize,
    pub min_side: usize,
    pub max_side: usize,
    /// Largest IoU allowed between two boxes of one image.
    pub max_pair_iou: f64,
    pub vocab_size: usize,
    pub keywords_per_class: usize,
    pub filler_tokens: usize,
    pub keyword_dropout: f64,
    /// Per absent category, probability of a negated mention of it.
    pub distractor_rate: f64,
    /// train / val / test ratios over the labeled portion.
    pub split: [f64; 3],
    /// Extra fully annotated samples reserved for evaluation.
    pub holdout_samples: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            num_samples: 5000,
            labeled_fraction: 0.01,
            num_classes: 8,
            height: 16,
            width: 16,
            channels: 4,
            signature_amplitude: 1.0,
            noise_sigma: 0.8,
            max_abnormalities: 3,
            min_side: 3,
            max_side: 5,
            max_pair_iou: 0.3,
            vocab_size: 200,
            keywords_per_class: 1,
            filler_tokens: 4,
            keyword_dropout: 0.1,
            distractor_rate: 0.05,
            split: [0.7, 0.1, 0.2],
            holdout_samples: 1000,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.labeled_fraction > 0.0 && self.labeled_fraction <= 1.0) {
            return bad(format!("labeled_fraction {} not in (0, 1]", self.labeled_fraction));
        }
        if (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 || self.split.iter().any(|&r| r < 0.0) {
            return bad(format!("split ratios {:?} must be non-negative and sum to 1", self.split));
        }
        if self.num_classes == 0 || self.num_classes > MAX_CLASSES {
            return bad(format!("num_classes {} not in [1, {MAX_CLASSES}]", self.num_classes));
        }
        if self.channels < 2 || (1usize << (self.channels - 1).min(16)) < self.num_classes {
            return bad(format!(
                "{} channels cannot code {} categories (need 2^(C-1) >= K)",
                self.channels, self.num_classes
            ));
        }
        if self.min_side < 1 || self.min_side > self.max_side || self.max_side > self.width.min(self.height) {
            return bad(format!(
                "box sides [{}, {}] do not fit a {}x{} grid",
                self.min_side, self.max_side, self.width, self.height
            ));
        }
        if self.max_abnormalities > self.num_classes {
            return bad("max_abnormalities exceeds num_classes (categories are distinct per image)".into());
        }
        if self.keywords_per_class == 0 || self.vocab_size < self.num_classes * self.keywords_per_class + 2 {
            return bad(format!(
                "vocab_size {} too small for {} keywords plus filler and negation",
                self.vocab_size,
                self.num_classes * self.keywords_per_class
            ));
        }
        for (name, v) in [
            ("keyword_dropout", self.keyword_dropout),
            ("distractor_rate", self.distractor_rate),
            ("max_pair_iou", self.max_pair_iou),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} not in [0, 1]"));
            }
        }
        if !(self.noise_sigma >= 0.0) || !self.signature_amplitude.is_finite() {
            return bad("noise_sigma and signature_amplitude must be finite, sigma >= 0".into());
        }
        if self.num_samples == 0 {
            return bad("num_samples must be positive".into());
        }
        Ok(())
    }

    /// Sizes of the (train, val, test) labeled splits.
    pub fn labeled_counts(&self) -> (usize, usize, usize) {
        let n_l = ((self.num_samples as f64 * self.labeled_fraction).round() as usize).clamp(1, self.num_samples);
        let train = (n_l as f64 * self.split[0]).round() as usize;
        let val = ((n_l as f64 * self.split[1]).round() as usize).min(n_l - train.min(n_l));
        let train = train.min(n_l);
        (train, val, n_l - train - val)
    }

    pub fn keyword_token(&self, category: usize, k: usize) -> u32 {
        (category * self.keywords_per_class + k) as u32
    }

    pub fn negation_token(&self) -> u32 {
        (self.vocab_size - 1) as u32
    }

    /// Category whose keyword this token is, if any.
    pub fn keyword_category(&self, token: u32) -> Option<usize> {
        let t = token as usize;
        (t < self.num_classes * self.keywords_per_class).then(|| t / self.keywords_per_class)
    }

    /// The ±1 code carried by channels `1..C` for a category.
    pub fn category_code(&self, category: usize) -> Vec<f64> {
        (0..self.channels - 1)
            .map(|j| if (category >> j) & 1 == 1 { 1.0 } else { -1.0 })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
    Unlabeled,
    Holdout,
}

impl Split {
    pub fn is_labeled(self) -> bool {
        !matches!(self, Split::Unlabeled)
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unlabeled => "unlabeled",
            Split::Holdout => "holdout",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "train" => Split::Train,
            "val" => Split::Val,
            "test" => Split::Test,
            "unlabeled" => Split::Unlabeled,
            "holdout" => Split::Holdout,
            other => return Err(Error::Config(format!("unknown split {other:?}"))),
        })
    }
}

/// Dense `H x W x C` feature grid, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFeatures {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub values: Vec<f32>,
}

impl ImageFeatures {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        ImageFeatures {
            height,
            width,
            channels,
            values: vec![0.0; height * width * channels],
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.values[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn at_mut(&mut self, y: usize, x: usize, c: usize) -> &mut f32 {
        &mut self.values[(y * self.width + x) * self.channels + c]
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.height * self.width * self.channels {
            return Err(Error::Shape(format!(
                "grid {}x{}x{} holds {} values",
                self.height,
                self.width,
                self.channels,
                self.values.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image features"));
        }
        Ok(())
    }
}

/// Sparse bag of tokens: `(token, count)` sorted by token, counts > 0.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportTokens {
    pub vocab_size: usize,
    pub counts: Vec<(u32, u32)>,
}

impl ReportTokens {
    pub fn from_tokens(vocab_size: usize, tokens: &[u32]) -> Self {
        let mut sorted = tokens.to_vec();
        sorted.sort_unstable();
        let mut counts: Vec<(u32, u32)> = Vec::new();
        for t in sorted {
            match counts.last_mut() {
                Some((last, n)) if *last == t => *n += 1,
                _ => counts.push((t, 1)),
            }
        }
        ReportTokens { vocab_size, counts }
    }

    pub fn count(&self, token: u32) -> u32 {
        self.counts
            .binary_search_by_key(&token, |&(t, _)| t)
            .map(|i| self.counts[i].1)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Abnormality {
    pub category: usize,
    pub bbox: BBox,
}

pub type Annotation = Vec<Abnormality>;

/// Per-sample pseudo-label corruption realized by [`inject_noise`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleNoise {
    /// `remap[c]` replaces category `c` in teacher detection pseudo labels.
    pub remap: Vec<usize>,
    /// Uniform coordinate jitter, as a fraction of box side.
    pub jitter: f64,
    pub jitter_seed: u64,
    /// Fabricated abnormality added to both pseudo-label channels.
    pub spurious: Option<Abnormality>,
}

impl SampleNoise {
    pub fn apply_to_detections(&self, dets: &DetectionSet, width: usize, height: usize) -> DetectionSet {
        let mut rng = rng_for(self.jitter_seed, &[]);
        let mut items: Vec<Detection> = dets
            .iter()
            .map(|d| {
                let mut out = *d;
                out.category = self.remap.get(d.category).copied().unwrap_or(d.category);
                if self.jitter > 0.0 {
                    let b = d.bbox;
                    let (w, h) = (b.width(), b.height());
                    let mut j = |side: f64| self.jitter * side * (2.0 * rng.random::<f64>() - 1.0);
                    let shifted = [
                        b.x_min() + j(w),
                        b.y_min() + j(h),
                        b.x_max() + j(w),
                        b.y_max() + j(h),
                    ];
                    if let Some(nb) = clamp_box(shifted, width as f64, height as f64) {
                        out.bbox = nb;
                    }
                }
                out
            })
            .collect();
        if let Some(s) = self.spurious {
            items.push(Detection {
                bbox: s.bbox,
                category: s.category,
                score: 1.0,
            });
        }
        DetectionSet::new(items, dets.source)
    }

    pub fn apply_to_classes(&self, classes: &ClassSet) -> ClassSet {
        let mut out = *classes;
        if let Some(s) = self.spurious {
            let _ = out.insert(s.category);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub id: usize,
    pub split: Split,
    pub image: ImageFeatures,
    pub report: ReportTokens,
    /// Visible annotation; present exactly on labeled splits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<Annotation>,
    /// Hidden ground truth of unlabeled samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<Annotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<SampleNoise>,
}

impl PairedSample {
    /// Multi-hot category vector derived from the visible annotation.
    pub fn class_labels(&self, num_classes: usize) -> Option<Vec<u8>> {
        self.annotation.as_ref().map(|a| multi_hot(a, num_classes))
    }

    /// Ground truth regardless of visibility.
    pub fn truth(&self) -> &[Abnormality] {
        self.annotation
            .as_deref()
            .or(self.latent.as_deref())
            .unwrap_or(&[])
    }

    pub fn targets(&self) -> Vec<(usize, BBox)> {
        self.annotation
            .as_ref()
            .map(|a| a.iter().map(|ab| (ab.category, ab.bbox)).collect())
            .unwrap_or_default()
    }
}

pub fn multi_hot(annotation: &[Abnormality], num_classes: usize) -> Vec<u8> {
    let mut v = vec![0u8; num_classes];
    for a in annotation {
        v[a.category] = 1;
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Per (sample, category) probability of remapping the category.
    pub confusion: f64,
    pub jitter: f64,
    /// Per-sample probability of one fabricated abnormality.
    pub spurious: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            confusion: 0.3,
            jitter: 0.0,
            spurious: 0.0,
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec {
            confusion: 0.0,
            jitter: 0.0,
            spurious: 0.0,
        }
    }

    pub fn is_none(&self) -> bool {
        self.confusion == 0.0 && self.jitter == 0.0 && self.spurious == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("confusion", self.confusion),
            ("jitter", self.jitter),
            ("spurious", self.spurious),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("noise.{name} {v} not in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_spec: Option<NoiseSpec>,
    pub samples: Vec<PairedSample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &PairedSample> + '_ {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }
}

/// Generate the full dataset. Every sample draws from its own stream keyed
/// by `(seed, id)`, so output does not depend on generation order.
pub fn generate(config: &DatasetConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let (n_train, n_val, n_test) = config.labeled_counts();
    let mut order: Vec<usize> = (0..config.num_samples).collect();
    order.shuffle(&mut rng_for(seed, &["split".into()]));
    let mut split_of = vec![Split::Unlabeled; config.num_samples];
    for (rank, &id) in order.iter().enumerate() {
        split_of[id] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else if rank < n_train + n_val + n_test {
            Split::Test
        } else {
            Split::Unlabeled
        };
    }
    let total = config.num_samples + config.holdout_samples;
    let samples = (0..total)
        .map(|id| {
            let split = if id < config.num_samples {
                split_of[id]
            } else {
                Split::Holdout
            };
            generate_sample(config, seed, id, split)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        config: config.clone(),
        seed,
        noise_spec: None,
        samples,
    })
}

fn generate_sample(config: &DatasetConfig, seed: u64, id: usize, split: Split) -> Result<PairedSample> {
    let mut rng = rng_for(seed, &["sample".into(), id.into()]);
    let k = config.num_classes;

    let n_abn = rng.random_range(0..=config.max_abnormalities);
    let mut cats: Vec<usize> = (0..k).collect();
    cats.shuffle(&mut rng);
    let mut truth: Annotation = Vec::with_capacity(n_abn);
    for &category in cats.iter().take(n_abn) {
        for _attempt in 0..50 {
            let w = rng.random_range(config.min_side..=config.max_side);
            let h = rng.random_range(config.min_side..=config.max_side);
            let x = rng.random_range(0..=config.width - w);
            let y = rng.random_range(0..=config.height - h);
            let bbox = BBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64)?;
            if truth.iter().all(|a| a.bbox.iou(&bbox) <= config.max_pair_iou) {
                truth.push(Abnormality { category, bbox });
                break;
            }
        }
    }

    let mut image = ImageFeatures::zeros(config.height, config.width, config.channels);
    if config.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
        for v in image.values.iter_mut() {
            *v = normal.sample(&mut rng) as f32;
        }
    }
    let amp = config.signature_amplitude;
    for a in &truth {
        let code = config.category_code(a.category);
        for y in a.bbox.y_min() as usize..a.bbox.y_max() as usize {
            for x in a.bbox.x_min() as usize..a.bbox.x_max() as usize {
                *image.at_mut(y, x, 0) += amp as f32;
                for (j, s) in code.iter().enumerate() {
                    *image.at_mut(y, x, j + 1) += (amp * s) as f32;
                }
            }
        }
    }

    let present = multi_hot(&truth, k);
    let mut tokens: Vec<u32> = Vec::new();
    for c in 0..k {
        if present[c] == 1 {
            if rng.random::<f64>() < 1.0 - config.keyword_dropout {
                let mentions = 1 + (rng.random::<f64>() < 0.5) as usize;
                for _ in 0..mentions {
                    tokens.push(config.keyword_token(c, rng.random_range(0..config.keywords_per_class)));
                }
            }
        } else if rng.random::<f64>() < config.distractor_rate {
            tokens.push(config.keyword_token(c, rng.random_range(0..config.keywords_per_class)));
            tokens.push(config.negation_token());
        }
    }
    let filler_lo = (k * config.keywords_per_class) as u32;
    let filler_hi = config.negation_token();
    for _ in 0..config.filler_tokens {
        tokens.push(rng.random_range(filler_lo..filler_hi));
    }
    let report = ReportTokens::from_tokens(config.vocab_size, &tokens);

    let (annotation, latent) = if split.is_labeled() {
        (Some(truth), None)
    } else {
        (None, Some(truth))
    };
    Ok(PairedSample {
        id,
        split,
        image,
        report,
        annotation,
        latent,
        noise: None,
    })
}

/// Realize pseudo-label corruption for every unlabeled sample. Labeled and
/// holdout samples are never touched; all-zero rates return the input.
pub fn inject_noise(dataset: &Dataset, spec: &NoiseSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut out = dataset.clone();
    if spec.is_none() {
        return Ok(out);
    }
    let k = dataset.config.num_classes;
    let (w, h) = (dataset.config.width, dataset.config.height);
    for sample in out.samples.iter_mut().filter(|s| s.split == Split::Unlabeled) {
        let mut rng = rng_for(seed, &["noise".into(), sample.id.into()]);
        let remap: Vec<usize> = (0..k)
            .map(|c| {
                if k > 1 && rng.random::<f64>() < spec.confusion {
                    let r = rng.random_range(0..k - 1);
                    if r >= c {
                        r + 1
                    } else {
                        r
                    }
                } else {
                    c
                }
            })
            .collect();
        let jitter_seed = rng.random::<u64>();
        let truth = multi_hot(sample.truth(), k);
        let absent: Vec<usize> = (0..k).filter(|&c| truth[c] == 0).collect();
        let spurious = if !absent.is_empty() && rng.random::<f64>() < spec.spurious {
            let category = absent[rng.random_range(0..absent.len())];
            let side = dataset.config.min_side;
            let x = rng.random_range(0..=w - side) as f64;
            let y = rng.random_range(0..=h - side) as f64;
            Some(Abnormality {
                category,
                bbox: BBox::new(x, y, x + side as f64, y + side as f64)?,
            })
        } else {
            None
        };
        sample.noise = Some(SampleNoise {
            remap,
            jitter: spec.jitter,
            jitter_seed,
            spurious,
        });
    }
    out.noise_spec = Some(spec.clone());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetConfig {
        DatasetConfig {
            num_samples: 1000,
            holdout_samples: 20,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = DatasetConfig {
            num_samples: 200,
            holdout_samples: 10,
            ..DatasetConfig::default()
        };
        let a = generate(&cfg, 3).unwrap();
        let b = generate(&cfg, 3).unwrap();
        let c = generate(&cfg, 4).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn labeled_counts_follow_split_ratio() {
        let d = generate(&small(), 0).unwrap();
        assert_eq!(d.split(Split::Train).count(), 7);
        assert_eq!(d.split(Split::Val).count(), 1);
        assert_eq!(d.split(Split::Test).count(), 2);
        assert_eq!(d.split(Split::Unlabeled).count(), 990);
        assert_eq!(d.split(Split::Holdout).count(), 20);
        assert_eq!(DatasetConfig::default().labeled_counts(), (35, 5, 10));
    }

    #[test]
    fn visibility_and_label_consistency() {
        let d = generate(&small(), 1).unwrap();
        for s in &d.samples {
            assert_eq!(s.annotation.is_some(), s.split.is_labeled());
            assert_eq!(s.latent.is_some(), !s.split.is_labeled());
            if let Some(labels) = s.class_labels(8) {
                for c in 0..8 {
                    let has = s.truth().iter().any(|a| a.category == c);
                    assert_eq!(labels[c] == 1, has);
                }
            }
            for a in s.truth() {
                assert!(a.bbox.x_min() >= 0.0 && a.bbox.x_max() <= 16.0);
                assert!(a.bbox.y_min() >= 0.0 && a.bbox.y_max() <= 16.0);
                assert!(a.bbox.width() >= 3.0 && a.bbox.height() >= 3.0);
            }
            let t = s.truth();
            for i in 0..t.len() {
                for j in i + 1..t.len() {
                    assert!(t[i].bbox.iou(&t[j].bbox) <= 0.3);
                }
            }
        }
    }

    #[test]
    fn noiseless_reports_decode_to_labels() {
        let cfg = DatasetConfig {
            keyword_dropout: 0.0,
            distractor_rate: 0.0,
            ..small()
        };
        let d = generate(&cfg, 2).unwrap();
        for s in &d.samples {
            let mut decoded = vec![0u8; 8];
            for &(t, _) in &s.report.counts {
                if let Some(c) = cfg.keyword_category(t) {
                    decoded[c] = 1;
                }
            }
            assert_eq!(decoded, multi_hot(s.truth(), 8));
        }
    }

    #[test]
    fn keyword_presence_concentrates_at_one_minus_dropout() {
        let cfg = DatasetConfig {
            num_samples: 4000,
            holdout_samples: 0,
            keyword_dropout: 0.3,
            distractor_rate: 0.0,
            ..DatasetConfig::default()
        };
        let d = generate(&cfg, 5).unwrap();
        let (mut present, mut mentioned) = (0usize, 0usize);
        for s in &d.samples {
            for a in s.truth() {
                present += 1;
                let hit = (0..cfg.keywords_per_class).any(|k| s.report.count(cfg.keyword_token(a.category, k)) > 0);
                mentioned += hit as usize;
            }
        }
        let p = mentioned as f64 / present as f64;
        let sigma = (0.7 * 0.3 / present as f64).sqrt();
        assert!((p - 0.7).abs() < 3.0 * sigma, "mention rate {p}");
    }

    #[test]
    fn zero_noise_is_identity() {
        let d = generate(&small(), 0).unwrap();
        assert_eq!(inject_noise(&d, &NoiseSpec::none(), 9).unwrap(), d);
    }

    #[test]
    fn saturated_confusion_remaps_everything() {
        let d = generate(&small(), 0).unwrap();
        let spec = NoiseSpec {
            confusion: 1.0,
            ..NoiseSpec::none()
        };
        let noisy = inject_noise(&d, &spec, 9).unwrap();
        for (before, after) in d.samples.iter().zip(&noisy.samples) {
            match after.split {
                Split::Unlabeled => {
                    let n = after.noise.as_ref().unwrap();
                    assert!(n.remap.iter().enumerate().all(|(c, &r)| r != c && r < 8));
                }
                _ => assert_eq!(before, after),
            }
        }
    }

    #[test]
    fn clamp_keeps_boxes_valid() {
        let b = clamp_box([-3.0, 15.9, -1.0, 18.0], 16.0, 16.0).unwrap();
        assert!(b.x_min() >= 0.0 && b.x_max() <= 16.0 && b.y_max() <= 16.0);
        assert!(b.area() > 0.0);
        assert!(clamp_box([f64::NAN, 0.0, 1.0, 1.0], 16.0, 16.0).is_none());
    }
}
