//! Run configuration.
//!
//! Config files are TOML with dotted keys, e.g.
//!
//! ```toml
//! seed = 7
//! data.num_samples = 2000
//! pipeline.vision_batch.labeled = 10
//! pipeline.sa_nms = false
//! ```
//!
//! Precedence, lowest first: built-in defaults, the config file, then
//! command-line overrides. Unknown keys and type mismatches are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;
use crate::synthdata::{DatasetConfig, NoiseSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Read the dataset from this file instead of generating it.
    pub dataset_path: Option<PathBuf>,
    pub data: DatasetConfig,
    pub noise: NoiseSpec,
    pub pipeline: PipelineConfig,
    /// Paired seeds per ablation arm.
    pub ablation_repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs/default"),
            dataset_path: None,
            data: DatasetConfig::default(),
            noise: NoiseSpec::default(),
            pipeline: PipelineConfig::default(),
            ablation_repeats: 5,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config("seed must fit in a signed 64-bit integer".into()));
        }
        self.data.validate()?;
        self.noise.validate()?;
        self.pipeline.validate()
    }

    /// Every leaf as `(dotted key, value)`, sorted by key. Unset optional
    /// fields are omitted.
    pub fn flat_entries(&self) -> Result<Vec<(String, Value)>> {
        let mut out = Vec::new();
        flatten("", &serde_json::to_value(self)?, &mut out);
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }

    /// Flat dotted-key TOML; parses back to an equal config.
    pub fn to_toml(&self) -> Result<String> {
        let mut s = String::new();
        for (k, v) in self.flat_entries()? {
            let tv = json_to_toml(&v).ok_or_else(|| Error::Config(format!("{k}: cannot express as TOML")))?;
            s.push_str(&format!("{k} = {tv}\n"));
        }
        Ok(s)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        RunConfig::default().merge_toml(text)
    }

    /// Apply every key of a TOML document on top of `self`.
    pub fn merge_toml(self, text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut pairs = Vec::new();
        flatten_toml("", &toml::Value::Table(table), &mut pairs);
        let mut cfg = self;
        for (k, v) in pairs {
            cfg = cfg.set_value(&k, toml_to_json(&v))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text)
    }

    /// `key=value` with the value written in TOML syntax; bare words are
    /// taken as strings.
    pub fn set(self, assignment: &str) -> Result<Self> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {assignment:?}")))?;
        let (k, v) = (k.trim(), v.trim());
        let parsed = match toml::from_str::<toml::Table>(&format!("v = {v}")) {
            Ok(mut t) => toml_to_json(&t.remove("v").expect("key v was just written")),
            Err(_) => Value::String(v.to_string()),
        };
        self.set_value(k, parsed)
    }

    pub fn set_value(self, key: &str, value: Value) -> Result<Self> {
        let mut root = serde_json::to_value(&self)?;
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = slot
                .get_mut(part)
                .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
        }
        *slot = coerce(key, slot, value)?;
        serde_json::from_value(root).map_err(|e| Error::Config(format!("{key}: {e}")))
    }
}

fn coerce(key: &str, current: &Value, value: Value) -> Result<Value> {
    let mismatch = || Err(Error::Config(format!("{key}: expected a value like {current}, got {value}")));
    match (current, &value) {
        (Value::Null, _) => Ok(value),
        (Value::Number(c), Value::Number(v)) if c.is_f64() => Ok(serde_json::json!(v.as_f64().unwrap_or(f64::NAN))),
        (Value::Number(_), Value::Number(v)) if v.is_f64() => mismatch(),
        (Value::Number(_), Value::Number(_))
        | (Value::Bool(_), Value::Bool(_))
        | (Value::String(_), Value::String(_)) => Ok(value),
        (Value::Array(c), Value::Array(vs)) => {
            let proto = c.first().cloned().unwrap_or(Value::Null);
            vs.iter()
                .map(|v| coerce(key, &proto, v.clone()))
                .collect::<Result<Vec<_>>>()
                .map(Value::Array)
        }
        _ => mismatch(),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, child, out);
            }
        }
        Value::Null => {}
        leaf => out.push((prefix.to_string(), leaf.clone())),
    }
}

fn flatten_toml(prefix: &str, v: &toml::Value, out: &mut Vec<(String, toml::Value)>) {
    match v {
        toml::Value::Table(t) => {
            for (k, child) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_toml(&key, child, out);
            }
        }
        leaf => out.push((prefix.to_string(), leaf.clone())),
    }
}

fn toml_to_json(v: &toml::Value) -> Value {
    match v {
        toml::Value::String(s) => Value::String(s.clone()),
        toml::Value::Integer(i) => serde_json::json!(i),
        toml::Value::Float(f) => serde_json::json!(f),
        toml::Value::Boolean(b) => Value::Bool(*b),
        toml::Value::Datetime(d) => Value::String(d.to_string()),
        toml::Value::Array(a) => Value::Array(a.iter().map(toml_to_json).collect()),
        toml::Value::Table(t) => Value::Object(t.iter().map(|(k, v)| (k.clone(), toml_to_json(v))).collect()),
    }
}

fn json_to_toml(v: &Value) -> Option<toml::Value> {
    Some(match v {
        Value::Bool(b) => toml::Value::Boolean(*b),
        Value::Number(n) if n.is_f64() => toml::Value::Float(n.as_f64()?),
        Value::Number(n) => toml::Value::Integer(n.as_i64()?),
        Value::String(s) => toml::Value::String(s.clone()),
        Value::Array(a) => toml::Value::Array(a.iter().map(json_to_toml).collect::<Option<_>>()?),
        Value::Null | Value::Object(_) => return None,
    })
}
