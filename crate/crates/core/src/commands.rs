//! Library side of the command-line subcommands. Each function takes a
//! validated [`RunConfig`] and writes its outputs under `config.out`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate_classifier, evaluate_detector, EvalSettings, ThresholdAp};
use crate::models::{checkpoint, Arch, ModelHandle, Role};
use crate::persistence::{
    file_digest, metrics_csv, metrics_summary_json, read_dataset, read_json, write_dataset, write_json, write_text,
    CheckpointEntry, MetricSummary, RunManifest, SeedRecord,
};
use crate::pipeline::{initial_state, run_generation, AblationArm, GenerationState, PipelineConfig};
use crate::seed::{derive_seed, hash_bytes};
use crate::synthdata::{generate, inject_noise, Dataset, DatasetConfig, NoiseSpec, PairedSample, Split};

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const DATA_MANIFEST_FILE: &str = "data_manifest.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const ABLATION_JSON: &str = "ablation.json";
pub const ABLATION_TABLE: &str = "ablation.md";

pub fn seeds(base: u64) -> SeedRecord {
    SeedRecord {
        base,
        dataset: derive_seed(base, &["dataset".into()]),
        noise: derive_seed(base, &["noise".into()]),
        pipeline: derive_seed(base, &["pipeline".into()]),
    }
}

/// Generate the synthetic dataset and realize pseudo-label noise on it.
pub fn synthesize(data: &DatasetConfig, noise: &NoiseSpec, base_seed: u64) -> Result<Dataset> {
    let s = seeds(base_seed);
    inject_noise(&generate(data, s.dataset)?, noise, s.noise)
}

/// The configured dataset file if any, else a freshly synthesized one.
pub fn prepare_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.dataset_path {
        Some(p) => read_dataset(p),
        None => synthesize(&cfg.data, &cfg.noise, cfg.seed),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub tool_version: String,
    pub config: RunConfig,
    pub seeds: SeedRecord,
    pub records: usize,
    pub split_counts: Vec<(String, usize)>,
    pub digest: String,
}

pub fn gen_data(cfg: &RunConfig) -> Result<DataManifest> {
    cfg.validate()?;
    ensure_dir(&cfg.out)?;
    let data = synthesize(&cfg.data, &cfg.noise, cfg.seed)?;
    let path = cfg.out.join(DATASET_FILE);
    write_dataset(&data, &path)?;
    let split_counts = [Split::Train, Split::Val, Split::Test, Split::Unlabeled, Split::Holdout]
        .iter()
        .map(|&s| (s.name().to_string(), data.indices(s).len()))
        .collect();
    let manifest = DataManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        seeds: seeds(cfg.seed),
        records: data.samples.len(),
        split_counts,
        digest: file_digest(&path)?,
    };
    write_json(&cfg.out.join(DATA_MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// `baseline`, `full` or `custom`, by which mechanisms are enabled.
pub fn run_mode(p: &PipelineConfig) -> &'static str {
    if !p.sa_nms && !p.rpdlr && !p.apclr && p.generations <= 1 && p.report_generations <= 1 {
        "baseline"
    } else if p.sa_nms && p.rpdlr && p.apclr && p.generations >= 2 {
        "full"
    } else {
        "custom"
    }
}

fn save_checkpoint(dir: &Path, model: &ModelHandle, generation: usize, out: &mut Vec<CheckpointEntry>) -> Result<()> {
    let file = format!("{}_gen{generation}.ckpt", model.role().name());
    checkpoint::save(model, &dir.join(&file))?;
    out.push(CheckpointEntry {
        generation,
        role: model.role(),
        file,
        param_hash: model.param_hash(),
    });
    Ok(())
}

/// Full co-evolution run with checkpoints, metrics and manifest.
pub fn train(cfg: &RunConfig) -> Result<RunManifest> {
    cfg.validate()?;
    ensure_dir(&cfg.out)?;
    let data = prepare_dataset(cfg)?;
    let s = seeds(cfg.seed);
    let p = &cfg.pipeline;

    let mut checkpoints = Vec::new();
    let mut state = initial_state(&data, p, s.pipeline)?;
    save_checkpoint(&cfg.out, &state.teacher_vision, 0, &mut checkpoints)?;
    save_checkpoint(&cfg.out, &state.teacher_report, 0, &mut checkpoints)?;
    for _ in 0..p.generations.max(p.report_generations) {
        state = run_generation(state, &data, p, s.pipeline)?;
        save_checkpoint(&cfg.out, &state.teacher_vision, state.k, &mut checkpoints)?;
        save_checkpoint(&cfg.out, &state.teacher_report, state.k, &mut checkpoints)?;
    }

    write_text(&cfg.out.join(METRICS_CSV), &metrics_csv(&state.metrics_log))?;
    write_text(&cfg.out.join(METRICS_JSON), &metrics_summary_json(&state.metrics_log)?)?;
    let dataset_digest = match &cfg.dataset_path {
        Some(path) => file_digest(path)?,
        None => hash_bytes(&serde_json::to_vec(&data)?),
    };
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        mode: run_mode(p).to_string(),
        config: cfg.clone(),
        seeds: s,
        dataset_digest,
        stage_order: state
            .stages
            .iter()
            .map(|st| format!("{}@{}", st.name, st.generation))
            .collect(),
        stages: state.stages.clone(),
        promotions: state.promotions.clone(),
        checkpoints,
        eval: p.eval.clone(),
        metrics: state.metrics_log.clone(),
    };
    write_json(&cfg.out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// One run of one ablation arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub arm: AblationArm,
    pub seed: u64,
    pub metrics: Vec<MetricSummary>,
}

impl AblationRun {
    pub fn final_metrics(&self) -> &MetricSummary {
        self.metrics.last().expect("every run logs generation 0")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    /// Final-generation mAP@0.5 per seed, in seed order.
    pub map_50: Vec<f64>,
    pub mean: [f64; 3],
    pub sd: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub generations: usize,
    pub rows: Vec<AblationRow>,
    pub runs: Vec<AblationRun>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Seed of ablation repeat `r`.
pub fn repeat_seed(base: u64, r: usize) -> u64 {
    derive_seed(base, &["repeat".into(), r.into()])
}

/// Run the four incremental arms on `repeats` paired seeds. Within a seed
/// every arm shares the dataset and the initial teachers.
pub fn run_ablation(
    data_cfg: &DatasetConfig,
    noise: &NoiseSpec,
    pipeline: &PipelineConfig,
    base_seed: u64,
    repeats: usize,
) -> Result<AblationTable> {
    let generations = pipeline.generations.max(1);
    let seed_list: Vec<u64> = (0..repeats).map(|r| repeat_seed(base_seed, r)).collect();
    let mut runs = Vec::new();
    for &seed in &seed_list {
        let data = synthesize(data_cfg, noise, seed)?;
        let s = seeds(seed);
        let start: GenerationState = initial_state(&data, pipeline, s.pipeline)?;
        for arm in AblationArm::ALL {
            let cfg = arm.apply(pipeline, generations);
            let mut state = start.clone();
            for _ in 0..cfg.generations.max(cfg.report_generations) {
                state = run_generation(state, &data, &cfg, s.pipeline)?;
            }
            log::info!(
                "ablation seed {seed} arm {}: mAP@0.5 {:.4}",
                arm.label(),
                state.metrics_log.last().and_then(|m| m.map_at(0.5)).unwrap_or(f64::NAN)
            );
            runs.push(AblationRun {
                arm,
                seed,
                metrics: state.metrics_log.iter().map(MetricSummary::from).collect(),
            });
        }
    }
    let rows = AblationArm::ALL
        .iter()
        .map(|&arm| {
            let mine: Vec<&AblationRun> = runs.iter().filter(|r| r.arm == arm).collect();
            let col = |f: fn(&MetricSummary) -> Option<f64>| -> Vec<f64> {
                mine.iter().map(|r| f(r.final_metrics()).unwrap_or(f64::NAN)).collect()
            };
            let cols = [col(|m| m.map_25), col(|m| m.map_50), col(|m| m.map_75)];
            let stats: Vec<(f64, f64)> = cols.iter().map(|c| mean_sd(c)).collect();
            AblationRow {
                label: arm.label().to_string(),
                map_50: cols[1].clone(),
                mean: [stats[0].0, stats[1].0, stats[2].0],
                sd: [stats[0].1, stats[1].1, stats[2].1],
            }
        })
        .collect();
    Ok(AblationTable {
        seeds: seed_list,
        generations,
        rows,
        runs,
    })
}

impl AblationTable {
    pub fn row(&self, label: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Markdown table of mean ± sd mAP in percentage points.
    pub fn render(&self) -> String {
        let mut s = String::from("| configuration | mAP@0.25 | mAP@0.5 | mAP@0.75 |\n|---|---|---|---|\n");
        for r in &self.rows {
            let cell = |i: usize| format!("{:.2} ± {:.2}", 100.0 * r.mean[i], 100.0 * r.sd[i]);
            let _ = writeln!(s, "| {} | {} | {} | {} |", r.label, cell(0), cell(1), cell(2));
        }
        let _ = writeln!(s, "\n{} seeds, {} generations", self.seeds.len(), self.generations);
        s
    }
}

pub fn ablate(cfg: &RunConfig) -> Result<AblationTable> {
    cfg.validate()?;
    if cfg.ablation_repeats == 0 {
        return Err(Error::Config("ablation_repeats must be at least 1".into()));
    }
    ensure_dir(&cfg.out)?;
    let table = run_ablation(&cfg.data, &cfg.noise, &cfg.pipeline, cfg.seed, cfg.ablation_repeats)?;
    write_json(&cfg.out.join(ABLATION_JSON), &table)?;
    write_text(&cfg.out.join(ABLATION_TABLE), &table.render())?;
    Ok(table)
}

/// Result of evaluating one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub role: Role,
    pub split: Split,
    pub samples: usize,
    pub detection: Option<Vec<ThresholdAp>>,
    pub macro_auc: Option<f64>,
    pub per_class_auc: Option<Vec<Option<f64>>>,
}

pub fn eval_model(model: &ModelHandle, data: &Dataset, split: Split, settings: &EvalSettings) -> Result<EvalOutput> {
    let samples: Vec<&PairedSample> = data.split(split).collect();
    let k = data.num_classes();
    match &model.arch {
        Arch::Vision(a) => {
            if a.num_classes != k || a.height != data.config.height || a.width != data.config.width || a.channels != data.config.channels {
                return Err(Error::Shape("vision checkpoint does not fit the dataset".into()));
            }
            Ok(EvalOutput {
                role: Role::Vision,
                split,
                samples: samples.len(),
                detection: Some(evaluate_detector(model, &samples, k, settings)?),
                macro_auc: None,
                per_class_auc: None,
            })
        }
        Arch::Report(a) => {
            if a.num_classes != k || a.vocab_size != data.config.vocab_size {
                return Err(Error::Shape("report checkpoint does not fit the dataset".into()));
            }
            let (m, per) = evaluate_classifier(model, &samples, k)?;
            Ok(EvalOutput {
                role: Role::Report,
                split,
                samples: samples.len(),
                detection: None,
                macro_auc: m,
                per_class_auc: Some(per),
            })
        }
    }
}

pub fn eval(cfg: &RunConfig, checkpoint_path: &Path, split: Split) -> Result<EvalOutput> {
    cfg.validate()?;
    let model = checkpoint::load(checkpoint_path)?;
    let data = prepare_dataset(cfg)?;
    eval_model(&model, &data, split, &cfg.pipeline.eval)
}

pub fn render_eval(out: &EvalOutput) -> String {
    let mut s = format!("{} model on {} ({} samples)\n", out.role.name(), out.split.name(), out.samples);
    if let Some(d) = &out.detection {
        for t in d {
            let _ = writeln!(s, "mAP@{}: {:.4}", t.threshold, t.map);
        }
    }
    if let Some(a) = out.macro_auc {
        let _ = writeln!(s, "macro AUC: {a:.4}");
    }
    s
}

/// Generation curves of a finished run directory as a text table.
pub fn report(run_dir: &Path) -> Result<String> {
    let rows: Vec<MetricSummary> = read_json(&run_dir.join(METRICS_JSON))?;
    let f = |v: Option<f64>| v.map(|x| format!("{:.2}", 100.0 * x)).unwrap_or_else(|| "-".into());
    let mut s = String::from("generation  mAP@0.25  mAP@0.5  mAP@0.75  macro-AUC\n");
    for r in &rows {
        let _ = writeln!(
            s,
            "{:>10}  {:>8}  {:>7}  {:>8}  {:>9}",
            r.generation,
            f(r.map_25),
            f(r.map_50),
            f(r.map_75),
            f(r.macro_auc)
        );
    }
    Ok(s)
}
