//! Teacher-student distillation loops and the generation orchestrator.
//!
//! A run trains two teachers on labeled data, then for each generation:
//! trains a fresh report student on teacher pseudo classes (optionally
//! filtered by what the current vision teacher detects), trains a fresh
//! vision student on teacher pseudo boxes (optionally merged with its own
//! confident predictions and filtered by the new report student), and
//! promotes both students to teachers.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_classifier, evaluate_detector, EvalSettings, MetricRecord};
use crate::geometry::BBox;
use crate::losses::LossConfig;
use crate::models::report::ReportItem;
use crate::models::vision::{VisionItem, INFERENCE_NMS_IOU};
use crate::models::{
    analytic_gradient, vision_predict, Arch, GradientBatch, InitConfig, ModelHandle, ReportArch, ReportGuide, Role,
    VisionArch, VisionGuide,
};
use crate::refine::{apclr_with_guide, classify_to_classset, detected_categories, rpdlr, ClassSet, RefinementReport};
use crate::seed::{derive_seed, rng_for, Label};
use crate::suppression::{sa_nms, DetectionSet, Source};
use crate::synthdata::{Dataset, PairedSample, Split};

/// Labeled and unlabeled items drawn per batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub labeled: usize,
    pub unlabeled: usize,
}

impl BatchSpec {
    pub fn new(labeled: usize, unlabeled: usize) -> Self {
        BatchSpec { labeled, unlabeled }
    }

    pub fn batch_size(&self) -> usize {
        self.labeled + self.unlabeled
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Vision generations; 0 evaluates the initial teachers only.
    pub generations: usize,
    /// Report generations; defaults to the vision count.
    pub report_generations: usize,
    pub sa_nms: bool,
    pub rpdlr: bool,
    /// Filter report pseudo classes by the vision guide's detections.
    pub apclr: bool,
    pub teacher_iters: usize,
    pub student_iters: usize,
    pub report_batch: BatchSpec,
    pub vision_batch: BatchSpec,
    /// Teachers see labeled data only; these are their batch sizes.
    pub report_teacher_batch: usize,
    pub vision_teacher_batch: usize,
    pub vision_lr: f64,
    pub report_lr: f64,
    pub momentum: f64,
    /// L2 penalty on non-bias weights, added to every stage's gradient.
    pub vision_weight_decay: f64,
    pub report_weight_decay: f64,
    /// Minimum teacher score for a detection pseudo label.
    pub teacher_score_threshold: f64,
    /// Minimum probability for a report pseudo class or guide class.
    pub class_threshold: f64,
    pub sa_nms_iou: f64,
    pub sa_nms_student_floor: f64,
    /// Minimum detection score for a category to count as detected in APCLR.
    pub apclr_det_floor: f64,
    pub anchor_size: f64,
    pub reach: usize,
    /// Channel-0 level that extends a run feature.
    pub run_threshold: f64,
    pub init: InitConfig,
    pub loss: LossConfig,
    pub eval: EvalSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            generations: 2,
            report_generations: 2,
            sa_nms: true,
            rpdlr: true,
            apclr: true,
            teacher_iters: 2000,
            student_iters: 2000,
            report_batch: BatchSpec::new(8, 8),
            vision_batch: BatchSpec::new(10, 5),
            report_teacher_batch: 16,
            vision_teacher_batch: 15,
            vision_lr: 0.005,
            report_lr: 2.0,
            momentum: 0.9,
            vision_weight_decay: 0.0,
            report_weight_decay: 0.0,
            teacher_score_threshold: 0.4,
            class_threshold: 0.3,
            sa_nms_iou: 0.5,
            sa_nms_student_floor: 0.5,
            apclr_det_floor: 0.1,
            anchor_size: 4.0,
            reach: 5,
            run_threshold: 0.5,
            init: InitConfig::default(),
            loss: LossConfig::default(),
            eval: EvalSettings::default(),
        }
    }
}

impl PipelineConfig {
    /// All three mechanisms off: plain teacher-student distillation, one generation.
    pub fn baseline(mut self) -> Self {
        self.sa_nms = false;
        self.rpdlr = false;
        self.apclr = false;
        self.generations = self.generations.min(1);
        self.report_generations = self.report_generations.min(1);
        self
    }

    /// Co-evolution flag: off means one generation and no APCLR.
    pub fn with_coevolve(mut self, on: bool, generations: usize) -> Self {
        if on {
            self.apclr = true;
            self.generations = generations;
            self.report_generations = generations;
        } else {
            self.apclr = false;
            self.generations = generations.min(1);
            self.report_generations = generations.min(1);
        }
        self
    }

    pub fn coevolve(&self) -> bool {
        self.apclr || self.generations > 1 || self.report_generations > 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        for (name, v) in [
            ("vision_lr", self.vision_lr),
            ("report_lr", self.report_lr),
            ("anchor_size", self.anchor_size),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive and finite"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        for (name, v) in [
            ("teacher_score_threshold", self.teacher_score_threshold),
            ("class_threshold", self.class_threshold),
            ("sa_nms_iou", self.sa_nms_iou),
            ("sa_nms_student_floor", self.sa_nms_student_floor),
            ("apclr_det_floor", self.apclr_det_floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if self.report_batch.batch_size() == 0 || self.vision_batch.batch_size() == 0 {
            return bad("student batches must be non-empty");
        }
        if self.report_teacher_batch == 0 || self.vision_teacher_batch == 0 {
            return bad("teacher batches must be non-empty");
        }
        Ok(())
    }

    pub fn vision_arch(&self, data: &Dataset) -> VisionArch {
        let c = &data.config;
        VisionArch {
            height: c.height,
            width: c.width,
            channels: c.channels,
            num_classes: c.num_classes,
            anchor_size: self.anchor_size,
            reach: self.reach,
            run_threshold: self.run_threshold,
        }
    }

    pub fn report_arch(&self, data: &Dataset) -> ReportArch {
        ReportArch {
            vocab_size: data.config.vocab_size,
            num_classes: data.config.num_classes,
        }
    }

    fn total_generations(&self) -> usize {
        self.generations.max(self.report_generations)
    }
}

/// Number of batches seen with a given composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchCount {
    pub labeled: usize,
    pub unlabeled: usize,
    pub batches: usize,
}

/// Audit trail of one training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub generation: usize,
    pub role: Role,
    pub init_seed: u64,
    pub batch_seed: u64,
    pub iterations: usize,
    pub trained_hash: String,
    /// Hashes of every frozen model the stage read, before and after.
    pub frozen_before: BTreeMap<String, String>,
    pub frozen_after: BTreeMap<String, String>,
    pub batch_counts: Vec<BatchCount>,
    pub first_loss: Option<f64>,
    pub last_loss: Option<f64>,
    pub refinement: RefinementReport,
    pub sa_nms_added: usize,
}

impl StageRecord {
    fn new(name: &str, generation: usize, role: Role, init_seed: u64, batch_seed: u64) -> Self {
        StageRecord {
            name: name.to_string(),
            generation,
            role,
            init_seed,
            batch_seed,
            iterations: 0,
            trained_hash: String::new(),
            frozen_before: BTreeMap::new(),
            frozen_after: BTreeMap::new(),
            batch_counts: Vec::new(),
            first_loss: None,
            last_loss: None,
            refinement: RefinementReport::default(),
            sa_nms_added: 0,
        }
    }

    fn count_batch(&mut self, labeled: usize, unlabeled: usize) {
        match self
            .batch_counts
            .iter_mut()
            .find(|b| b.labeled == labeled && b.unlabeled == unlabeled)
        {
            Some(b) => b.batches += 1,
            None => self.batch_counts.push(BatchCount {
                labeled,
                unlabeled,
                batches: 1,
            }),
        }
    }

    fn observe_loss(&mut self, loss: f64) {
        if self.first_loss.is_none() {
            self.first_loss = Some(loss);
        }
        self.last_loss = Some(loss);
    }

    /// True when every frozen model the stage read is bit-identical afterwards.
    pub fn frozen_stable(&self) -> bool {
        self.frozen_before == self.frozen_after
    }
}

/// Draw one batch: `spec.labeled` indices from `labeled` then
/// `spec.unlabeled` from `unlabeled`, uniformly with replacement.
pub fn draw_batch(rng: &mut ChaCha8Rng, labeled: &[usize], unlabeled: &[usize], spec: BatchSpec) -> Result<Vec<(usize, bool)>> {
    if (spec.labeled > 0 && labeled.is_empty()) || (spec.unlabeled > 0 && unlabeled.is_empty()) {
        return Err(Error::EmptyBatch);
    }
    let mut out = Vec::with_capacity(spec.batch_size());
    for _ in 0..spec.labeled {
        out.push((labeled[rng.random_range(0..labeled.len())], true));
    }
    for _ in 0..spec.unlabeled {
        out.push((unlabeled[rng.random_range(0..unlabeled.len())], false));
    }
    Ok(out)
}

/// Seed of a stage's parameter initialization.
pub fn init_seed(base: u64, stage: &str, role: Role, generation: usize) -> u64 {
    derive_seed(base, &[Label::Str(stage), Label::Str(role.name()), generation.into()])
}

/// Seed of a stage's batch stream.
pub fn batch_seed(base: u64, stage: &str, role: Role, generation: usize) -> u64 {
    derive_seed(
        base,
        &["batches".into(), Label::Str(stage), Label::Str(role.name()), generation.into()],
    )
}

fn require_frozen(m: &ModelHandle, what: &str) -> Result<()> {
    if !m.is_frozen() {
        return Err(Error::Invariant(format!("{what} must be frozen")));
    }
    Ok(())
}

fn labeled_pool(data: &Dataset) -> Result<Vec<usize>> {
    let pool = data.indices(Split::Train);
    if pool.is_empty() {
        return Err(Error::EmptyLabeled);
    }
    Ok(pool)
}

/// Train one model on labeled data only, starting from `init` seeded
/// parameters. Returns the frozen result.
fn train_supervised(data: &Dataset, arch: Arch, cfg: &PipelineConfig, base_seed: u64) -> Result<(ModelHandle, StageRecord)> {
    let role = arch.role();
    let pool = labeled_pool(data)?;
    let iseed = init_seed(base_seed, "teacher", role, 0);
    let bseed = batch_seed(base_seed, "teacher", role, 0);
    let mut rec = StageRecord::new("initial_teacher", 0, role, iseed, bseed);
    let mut model = ModelHandle::init(arch, iseed, &cfg.init);
    let mut rng = rng_for(bseed, &[]);
    let (spec, lr, decay) = match role {
        Role::Vision => (BatchSpec::new(cfg.vision_teacher_batch, 0), cfg.vision_lr, cfg.vision_weight_decay),
        Role::Report => (BatchSpec::new(cfg.report_teacher_batch, 0), cfg.report_lr, cfg.report_weight_decay),
    };
    let k = data.num_classes();
    for _ in 0..cfg.teacher_iters {
        let batch = draw_batch(&mut rng, &pool, &[], spec)?;
        rec.count_batch(batch.len(), 0);
        let samples: Vec<&PairedSample> = batch.iter().map(|&(i, _)| &data.samples[i]).collect();
        let gb = match role {
            Role::Vision => GradientBatch::Vision(
                samples
                    .iter()
                    .map(|s| VisionItem {
                        image: &s.image,
                        targets: s.targets(),
                        labeled: true,
                    })
                    .collect(),
            ),
            Role::Report => GradientBatch::Report(
                samples
                    .iter()
                    .map(|s| ReportItem {
                        report: &s.report,
                        targets: s.class_labels(k).unwrap_or_else(|| vec![0; k]),
                        labeled: true,
                    })
                    .collect(),
            ),
        };
        let (loss, mut grad) = analytic_gradient(&model, &gb, &cfg.loss)?;
        rec.observe_loss(loss.total);
        model.add_weight_decay(&mut grad, decay);
        model.train_step(&grad, lr, cfg.momentum)?;
        rec.iterations += 1;
    }
    let model = model.freeze();
    rec.trained_hash = model.param_hash();
    Ok((model, rec))
}

/// Both initial teachers, trained on labeled data only and frozen.
pub fn train_initial_teachers(data: &Dataset, cfg: &PipelineConfig, base_seed: u64) -> Result<(ModelHandle, ModelHandle, Vec<StageRecord>)> {
    let (v, rv) = train_supervised(data, Arch::Vision(cfg.vision_arch(data)), cfg, base_seed)?;
    let (r, rr) = train_supervised(data, Arch::Report(cfg.report_arch(data)), cfg, base_seed)?;
    Ok((v, r, vec![rv, rr]))
}

/// Teacher detection pseudo labels of one sample, corrupted by the
/// sample's injected noise if it carries any.
pub fn teacher_pseudo_detections(teacher: &ModelHandle, sample: &PairedSample, cfg: &PipelineConfig) -> Result<DetectionSet> {
    let dets = vision_predict(teacher, &sample.image, cfg.teacher_score_threshold, Some(INFERENCE_NMS_IOU))?
        .with_source(Source::Teacher);
    Ok(match &sample.noise {
        Some(n) => n.apply_to_detections(&dets, sample.image.width, sample.image.height),
        None => dets,
    })
}

/// Teacher report pseudo classes of one sample, corrupted likewise.
pub fn teacher_pseudo_classes(teacher: &dyn ReportGuide, sample: &PairedSample, cfg: &PipelineConfig) -> Result<ClassSet> {
    let classes = classify_to_classset(&teacher.classify(sample)?, cfg.class_threshold);
    Ok(match &sample.noise {
        Some(n) => n.apply_to_classes(&classes),
        None => classes,
    })
}

/// Per-stage settings shared by the two student loops.
#[derive(Debug, Clone, Copy)]
pub struct StudentStage {
    pub generation: usize,
    pub base_seed: u64,
}

/// Report distillation with optional abnormality-guided filtering of the
/// teacher's pseudo classes. Returns the frozen student.
pub fn train_report_student(
    teacher: &ModelHandle,
    vision_guide: Option<&dyn VisionGuide>,
    data: &Dataset,
    cfg: &PipelineConfig,
    stage: StudentStage,
) -> Result<(ModelHandle, StageRecord)> {
    require_frozen(teacher, "report teacher")?;
    let k = data.num_classes();
    let iseed = init_seed(stage.base_seed, "student", Role::Report, stage.generation);
    let bseed = batch_seed(stage.base_seed, "student", Role::Report, stage.generation);
    let mut rec = StageRecord::new("report_student", stage.generation, Role::Report, iseed, bseed);
    rec.frozen_before.insert("teacher_report".into(), teacher.param_hash());

    let labeled = labeled_pool(data)?;
    let unlabeled = data.indices(Split::Unlabeled);
    let mut pseudo: BTreeMap<usize, Vec<u8>> = BTreeMap::new();
    for &i in &unlabeled {
        let s = &data.samples[i];
        let mut classes = teacher_pseudo_classes(teacher, s, cfg)?;
        if let Some(g) = vision_guide {
            let seen = detected_categories(&g.detect(s, cfg.apclr_det_floor)?, k, cfg.apclr_det_floor);
            let (kept, r) = apclr_with_guide(&classes, &seen);
            rec.refinement.merge(&r);
            classes = kept;
        }
        pseudo.insert(i, classes.to_binary());
    }

    let mut model = ModelHandle::init(Arch::Report(cfg.report_arch(data)), iseed, &cfg.init);
    model.generation = stage.generation;
    let mut rng = rng_for(bseed, &[]);
    for _ in 0..cfg.student_iters {
        let batch = draw_batch(&mut rng, &labeled, &unlabeled, cfg.report_batch)?;
        let items: Vec<ReportItem<'_>> = batch
            .iter()
            .map(|&(i, is_lab)| {
                let s = &data.samples[i];
                ReportItem {
                    report: &s.report,
                    targets: if is_lab {
                        s.class_labels(k).unwrap_or_else(|| vec![0; k])
                    } else {
                        pseudo[&i].clone()
                    },
                    labeled: is_lab,
                }
            })
            .collect();
        let n_lab = items.iter().filter(|it| it.labeled).count();
        rec.count_batch(n_lab, items.len() - n_lab);
        let (loss, mut grad) = analytic_gradient(&model, &GradientBatch::Report(items), &cfg.loss)?;
        rec.observe_loss(loss.total);
        model.add_weight_decay(&mut grad, cfg.report_weight_decay);
        model.train_step(&grad, cfg.report_lr, cfg.momentum)?;
        rec.iterations += 1;
    }
    let model = model.freeze();
    rec.trained_hash = model.param_hash();
    rec.frozen_after.insert("teacher_report".into(), teacher.param_hash());
    Ok((model, rec))
}

/// Detection distillation with optional self-adaptive NMS and
/// report-guided filtering of the teacher's pseudo boxes. Returns the
/// frozen student.
pub fn train_vision_student(
    teacher: &ModelHandle,
    report_guide: Option<&dyn ReportGuide>,
    data: &Dataset,
    cfg: &PipelineConfig,
    stage: StudentStage,
) -> Result<(ModelHandle, StageRecord)> {
    require_frozen(teacher, "vision teacher")?;
    let iseed = init_seed(stage.base_seed, "student", Role::Vision, stage.generation);
    let bseed = batch_seed(stage.base_seed, "student", Role::Vision, stage.generation);
    let mut rec = StageRecord::new("vision_student", stage.generation, Role::Vision, iseed, bseed);
    rec.frozen_before.insert("teacher_vision".into(), teacher.param_hash());

    let labeled = labeled_pool(data)?;
    let unlabeled = data.indices(Split::Unlabeled);
    let mut teacher_dets: BTreeMap<usize, DetectionSet> = BTreeMap::new();
    let mut guide_classes: BTreeMap<usize, ClassSet> = BTreeMap::new();
    for &i in &unlabeled {
        let s = &data.samples[i];
        teacher_dets.insert(i, teacher_pseudo_detections(teacher, s, cfg)?);
        if let Some(g) = report_guide {
            guide_classes.insert(i, classify_to_classset(&g.classify(s)?, cfg.class_threshold));
        }
    }

    let mut model = ModelHandle::init(Arch::Vision(cfg.vision_arch(data)), iseed, &cfg.init);
    model.generation = stage.generation;
    let mut rng = rng_for(bseed, &[]);
    for _ in 0..cfg.student_iters {
        let batch = draw_batch(&mut rng, &labeled, &unlabeled, cfg.vision_batch)?;
        let mut targets: Vec<Vec<(usize, BBox)>> = Vec::with_capacity(batch.len());
        for &(i, is_lab) in &batch {
            let s = &data.samples[i];
            if is_lab {
                targets.push(s.targets());
                continue;
            }
            let mut dets = teacher_dets[&i].clone();
            if cfg.sa_nms {
                let own = vision_predict(&model, &s.image, cfg.sa_nms_student_floor, None)?;
                let before = dets.len();
                dets = sa_nms(&dets, &own, cfg.sa_nms_iou, cfg.sa_nms_student_floor);
                rec.sa_nms_added += dets.len().saturating_sub(before);
            }
            if let Some(classes) = guide_classes.get(&i) {
                let (kept, r) = rpdlr(&dets, classes);
                rec.refinement.merge(&r);
                dets = kept;
            }
            targets.push(dets.iter().map(|d| (d.category, d.bbox)).collect());
        }
        let items: Vec<VisionItem<'_>> = batch
            .iter()
            .zip(targets)
            .map(|(&(i, is_lab), t)| VisionItem {
                image: &data.samples[i].image,
                targets: t,
                labeled: is_lab,
            })
            .collect();
        let n_lab = items.iter().filter(|it| it.labeled).count();
        rec.count_batch(n_lab, items.len() - n_lab);
        let (loss, mut grad) = analytic_gradient(&model, &GradientBatch::Vision(items), &cfg.loss)?;
        rec.observe_loss(loss.total);
        model.add_weight_decay(&mut grad, cfg.vision_weight_decay);
        model.train_step(&grad, cfg.vision_lr, cfg.momentum)?;
        rec.iterations += 1;
    }
    let model = model.freeze();
    rec.trained_hash = model.param_hash();
    rec.frozen_after.insert("teacher_vision".into(), teacher.param_hash());
    Ok((model, rec))
}

/// Models and history at a generation boundary.
#[derive(Debug, Clone)]
pub struct GenerationState {
    /// Number of completed generations.
    pub k: usize,
    pub teacher_vision: ModelHandle,
    pub teacher_report: ModelHandle,
    pub student_vision: Option<ModelHandle>,
    pub student_report: Option<ModelHandle>,
    pub metrics_log: Vec<MetricRecord>,
    pub stages: Vec<StageRecord>,
    /// `(generation, role, parameter hash)` of every promotion.
    pub promotions: Vec<(usize, Role, String)>,
}

/// Samples metrics are reported on: the holdout split when present,
/// otherwise the labeled test split.
pub fn evaluation_samples(data: &Dataset) -> Vec<&PairedSample> {
    let holdout: Vec<&PairedSample> = data.split(Split::Holdout).collect();
    if holdout.is_empty() {
        data.split(Split::Test).collect()
    } else {
        holdout
    }
}

pub fn evaluate_models(
    vision: &ModelHandle,
    report: &ModelHandle,
    data: &Dataset,
    settings: &EvalSettings,
    generation: usize,
) -> Result<MetricRecord> {
    let samples = evaluation_samples(data);
    let k = data.num_classes();
    let detection = evaluate_detector(vision, &samples, k, settings)?;
    let (macro_auc, per_class_auc) = evaluate_classifier(report, &samples, k)?;
    Ok(MetricRecord {
        generation,
        detection,
        macro_auc,
        per_class_auc,
    })
}

/// Initial teachers plus their generation-0 metrics.
pub fn initial_state(data: &Dataset, cfg: &PipelineConfig, base_seed: u64) -> Result<GenerationState> {
    cfg.validate()?;
    let (tv, tr, stages) = train_initial_teachers(data, cfg, base_seed)?;
    let m0 = evaluate_models(&tv, &tr, data, &cfg.eval, 0)?;
    Ok(GenerationState {
        k: 0,
        teacher_vision: tv,
        teacher_report: tr,
        student_vision: None,
        student_report: None,
        metrics_log: vec![m0],
        stages,
        promotions: Vec::new(),
    })
}

/// One co-evolution generation: report student, reborn vision student,
/// promotion, metrics.
pub fn run_generation(mut state: GenerationState, data: &Dataset, cfg: &PipelineConfig, base_seed: u64) -> Result<GenerationState> {
    let k = state.k + 1;
    let stage = StudentStage {
        generation: k,
        base_seed,
    };

    let student_report = if k <= cfg.report_generations {
        // The current vision teacher is the initial teacher at k = 1 and the
        // previous vision student afterwards.
        let guide: Option<&dyn VisionGuide> = cfg.apclr.then_some(&state.teacher_vision as &dyn VisionGuide);
        let (m, rec) = train_report_student(&state.teacher_report, guide, data, cfg, stage)?;
        state.stages.push(rec);
        m
    } else {
        state.teacher_report.clone()
    };

    let student_vision = if k <= cfg.generations {
        let guide: Option<&dyn ReportGuide> = cfg.rpdlr.then_some(&student_report as &dyn ReportGuide);
        let (m, rec) = train_vision_student(&state.teacher_vision, guide, data, cfg, stage)?;
        state.stages.push(rec);
        m
    } else {
        state.teacher_vision.clone()
    };

    state
        .metrics_log
        .push(evaluate_models(&student_vision, &student_report, data, &cfg.eval, k)?);

    state.teacher_vision = student_vision.clone();
    state.teacher_report = student_report.clone();
    state.promotions.push((k, Role::Vision, student_vision.param_hash()));
    state.promotions.push((k, Role::Report, student_report.param_hash()));
    state.student_vision = Some(student_vision);
    state.student_report = Some(student_report);
    state.k = k;
    Ok(state)
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub final_vision: ModelHandle,
    pub final_report: ModelHandle,
    pub state: GenerationState,
}

impl RunResult {
    pub fn metrics(&self) -> &[MetricRecord] {
        &self.state.metrics_log
    }
}

/// Initial teachers followed by every configured generation.
pub fn run_coevolution(data: &Dataset, cfg: &PipelineConfig, base_seed: u64) -> Result<RunResult> {
    run_coevolution_with(data, cfg, base_seed, |_| {})
}

/// [`run_coevolution`] with a callback after each generation boundary.
pub fn run_coevolution_with(
    data: &Dataset,
    cfg: &PipelineConfig,
    base_seed: u64,
    mut on_generation: impl FnMut(&GenerationState),
) -> Result<RunResult> {
    let mut state = initial_state(data, cfg, base_seed)?;
    on_generation(&state);
    for _ in 0..cfg.total_generations() {
        state = run_generation(state, data, cfg, base_seed)?;
        log::info!(
            "generation {}: mAP@0.5 {:.4}, macro AUC {:.4}",
            state.k,
            state.metrics_log.last().and_then(|m| m.map_at(0.5)).unwrap_or(f64::NAN),
            state.metrics_log.last().and_then(|m| m.macro_auc).unwrap_or(f64::NAN),
        );
        on_generation(&state);
    }
    Ok(RunResult {
        final_vision: state.teacher_vision.clone(),
        final_report: state.teacher_report.clone(),
        state,
    })
}

/// The four incremental configurations of the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationArm {
    Baseline,
    Rpdlr,
    CoeApclr,
    SaNms,
}

impl AblationArm {
    pub const ALL: [AblationArm; 4] = [AblationArm::Baseline, AblationArm::Rpdlr, AblationArm::CoeApclr, AblationArm::SaNms];

    pub fn label(self) -> &'static str {
        match self {
            AblationArm::Baseline => "baseline",
            AblationArm::Rpdlr => "RPDLR",
            AblationArm::CoeApclr => "CoE+APCLR",
            AblationArm::SaNms => "SA-NMS",
        }
    }

    /// Mechanisms enabled cumulatively; `generations` is the co-evolution depth.
    pub fn apply(self, cfg: &PipelineConfig, generations: usize) -> PipelineConfig {
        let mut c = cfg.clone().baseline().with_coevolve(false, generations);
        if self == AblationArm::Baseline {
            return c;
        }
        c.rpdlr = true;
        if self == AblationArm::Rpdlr {
            return c;
        }
        c = c.with_coevolve(true, generations);
        if self == AblationArm::CoeApclr {
            return c;
        }
        c.sa_nms = true;
        c
    }
}
