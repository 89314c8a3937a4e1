//! On-disk formats: dataset JSONL, metrics CSV/JSON, run manifests.
//! Checkpoints live in [`crate::models::checkpoint`].
//!
//! Dataset files are JSON lines. Line 1 is a header
//! `{"schema": "coevo-dataset", "version": 1, "config": .., "seed": ..,
//! "noise_spec": .., "count": N}`; each of the next N lines is one sample.
//!
//! Metrics CSV columns, in order: `generation,threshold,class,ap,map,auc`.
//! One row per generation x threshold x class, where `ap` is that class's
//! AP (empty without ground truth), `map` the threshold's mean AP and `auc`
//! the class's ROC-AUC (empty when undefined). Each generation x threshold
//! block ends with a row whose class is `macro`, `ap` empty and `auc` the
//! macro AUC.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{EvalSettings, MetricRecord};
use crate::pipeline::StageRecord;
use crate::models::Role;
use crate::synthdata::{Dataset, DatasetConfig, NoiseSpec, PairedSample};

pub const DATASET_SCHEMA: &str = "coevo-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetHeader {
    schema: String,
    version: u32,
    config: DatasetConfig,
    seed: u64,
    noise_spec: Option<NoiseSpec>,
    count: usize,
}

pub fn write_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = DatasetHeader {
        schema: DATASET_SCHEMA.to_string(),
        version: DATASET_VERSION,
        config: data.config.clone(),
        seed: data.seed,
        noise_spec: data.noise_spec.clone(),
        count: data.samples.len(),
    };
    let io = |e| Error::io(path, e);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n").map_err(io)?;
    for s in &data.samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Schema(format!("{}: empty file", path.display())))?
        .map_err(|e| Error::io(path, e))?;
    let header: DatasetHeader = serde_json::from_str(&first)
        .map_err(|e| Error::Schema(format!("{}: bad header: {e}", path.display())))?;
    if header.schema != DATASET_SCHEMA || header.version != DATASET_VERSION {
        return Err(Error::Schema(format!(
            "{}: expected {DATASET_SCHEMA} v{DATASET_VERSION}, found {} v{}",
            path.display(),
            header.schema,
            header.version
        )));
    }
    let mut samples = Vec::with_capacity(header.count);
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let s: PairedSample = serde_json::from_str(&line)?;
        s.image.validate()?;
        samples.push(s);
    }
    if samples.len() != header.count {
        return Err(Error::Schema(format!(
            "{}: header promises {} samples, found {}",
            path.display(),
            header.count,
            samples.len()
        )));
    }
    Ok(Dataset {
        config: header.config,
        seed: header.seed,
        noise_spec: header.noise_spec,
        samples,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn metrics_csv(records: &[MetricRecord]) -> String {
    let mut s = String::from("generation,threshold,class,ap,map,auc\n");
    for r in records {
        for t in &r.detection {
            for (c, ap) in t.per_class.iter().enumerate() {
                let auc = r.per_class_auc.get(c).copied().flatten();
                let _ = writeln!(s, "{},{},{},{},{},{}", r.generation, t.threshold, c, opt(*ap), t.map, opt(auc));
            }
            let _ = writeln!(s, "{},{},macro,,{},{}", r.generation, t.threshold, t.map, opt(r.macro_auc));
        }
    }
    s
}

/// Compact per-generation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub generation: usize,
    pub map_25: Option<f64>,
    pub map_50: Option<f64>,
    pub map_75: Option<f64>,
    pub macro_auc: Option<f64>,
}

impl From<&MetricRecord> for MetricSummary {
    fn from(r: &MetricRecord) -> Self {
        MetricSummary {
            generation: r.generation,
            map_25: r.map_at(0.25),
            map_50: r.map_at(0.5),
            map_75: r.map_at(0.75),
            macro_auc: r.macro_auc,
        }
    }
}

pub fn metrics_summary_json(records: &[MetricRecord]) -> Result<String> {
    let rows: Vec<MetricSummary> = records.iter().map(MetricSummary::from).collect();
    Ok(serde_json::to_string_pretty(&rows)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub generation: usize,
    pub role: Role,
    pub file: String,
    pub param_hash: String,
}

/// Everything needed to reproduce and audit a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// `baseline` when all three mechanisms are off, else `full` or `custom`.
    pub mode: String,
    pub config: RunConfig,
    pub seeds: SeedRecord,
    pub dataset_digest: String,
    pub stage_order: Vec<String>,
    pub stages: Vec<StageRecord>,
    pub promotions: Vec<(usize, Role, String)>,
    pub checkpoints: Vec<CheckpointEntry>,
    pub eval: EvalSettings,
    pub metrics: Vec<MetricRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub base: u64,
    pub dataset: u64,
    pub noise: u64,
    pub pipeline: u64,
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(crate::seed::hash_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}
