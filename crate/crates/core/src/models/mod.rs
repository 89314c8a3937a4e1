//! Trainable predictors for the four model roles.
//!
//! Both reference models are linear in fixed features, so their gradients
//! are written out by hand: an anchor-grid detector over per-cell features
//! ([`vision`]) and a bag-of-words multi-label classifier ([`report`]).
//! Guides used by the pipeline go through the [`VisionGuide`] and
//! [`ReportGuide`] traits so oracle predictors can stand in for models.

pub mod checkpoint;
pub mod oracle;
pub mod report;
pub mod vision;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{LossConfig, LossValue};
use crate::seed::{hash_params, rng_for};
use crate::suppression::DetectionSet;
use crate::synthdata::PairedSample;

pub use report::{report_predict, ReportArch};
pub use vision::{vision_predict, VisionArch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Vision,
    Report,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Vision => "vision",
            Role::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arch {
    Vision(VisionArch),
    Report(ReportArch),
}

impl Arch {
    pub fn role(&self) -> Role {
        match self {
            Arch::Vision(_) => Role::Vision,
            Arch::Report(_) => Role::Report,
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Arch::Vision(a) => a.num_params(),
            Arch::Report(a) => a.num_params(),
        }
    }

    /// Whether parameter `i` is an output bias.
    pub fn is_bias(&self, i: usize) -> bool {
        match self {
            Arch::Vision(a) => i % a.feature_dim() == a.feature_dim() - 1,
            Arch::Report(a) => i % (a.vocab_size + 1) == a.vocab_size,
        }
    }
}

/// Initialization distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    /// Weights are drawn from uniform(-scale, scale).
    pub scale: f64,
    /// Initial foreground probability of the detector's class outputs.
    pub prior_prob: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            scale: 0.01,
            prior_prob: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHandle {
    pub arch: Arch,
    params: Vec<f64>,
    #[serde(skip)]
    velocity: Vec<f64>,
    frozen: bool,
    pub seed: u64,
    pub generation: usize,
}

impl ModelHandle {
    /// All-zero parameters, trainable.
    pub fn zeros(arch: Arch) -> Self {
        let n = arch.num_params();
        ModelHandle {
            arch,
            params: vec![0.0; n],
            velocity: vec![0.0; n],
            frozen: false,
            seed: 0,
            generation: 0,
        }
    }

    /// Fresh parameters drawn from the initialization distribution keyed by `seed`.
    pub fn init(arch: Arch, seed: u64, init: &InitConfig) -> Self {
        let mut rng = rng_for(seed, &["init".into()]);
        let mut params: Vec<f64> = (0..arch.num_params())
            .map(|_| init.scale * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        if let Arch::Vision(a) = &arch {
            let bias = -((1.0 - init.prior_prob) / init.prior_prob).ln();
            for k in 0..a.num_classes {
                params[a.bias_index(k)] = bias;
            }
        }
        let n = params.len();
        ModelHandle {
            arch,
            params,
            velocity: vec![0.0; n],
            frozen: false,
            seed,
            generation: 0,
        }
    }

    /// Build from explicit parameters (checkpoint loading, tests).
    pub fn from_params(arch: Arch, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.num_params() {
            return Err(Error::DimensionMismatch {
                expected: arch.num_params(),
                actual: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("parameters"));
        }
        let n = params.len();
        Ok(ModelHandle {
            arch,
            params,
            velocity: vec![0.0; n],
            frozen: false,
            seed: 0,
            generation: 0,
        })
    }

    /// Same architecture, parameters redrawn from `seed`, velocity cleared.
    pub fn reinit(&self, seed: u64, init: &InitConfig) -> Self {
        let mut m = ModelHandle::init(self.arch.clone(), seed, init);
        m.generation = self.generation;
        m
    }

    pub fn role(&self) -> Role {
        self.arch.role()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn param_hash(&self) -> String {
        hash_params(&self.params)
    }

    /// Momentum SGD: `v <- momentum * v + grad; params <- params - lr * v`.
    pub fn train_step(&mut self, grad: &[f64], lr: f64, momentum: f64) -> Result<()> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        if grad.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                actual: grad.len(),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        if self.velocity.len() != self.params.len() {
            self.velocity = vec![0.0; self.params.len()];
        }
        for ((p, v), g) in self.params.iter_mut().zip(self.velocity.iter_mut()).zip(grad) {
            *v = momentum * *v + g;
            *p -= lr * *v;
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("parameters after update"));
        }
        Ok(())
    }

    /// Add the gradient of `decay / 2 * |w|^2` over non-bias weights.
    pub fn add_weight_decay(&self, grad: &mut [f64], decay: f64) {
        if decay == 0.0 {
            return;
        }
        for (i, (g, p)) in grad.iter_mut().zip(&self.params).enumerate() {
            if !self.arch.is_bias(i) {
                *g += decay * p;
            }
        }
    }

    pub(crate) fn expect_role(&self, role: Role) -> Result<()> {
        if self.role() != role {
            return Err(Error::RoleMismatch {
                expected: role.name(),
                actual: self.role().name(),
            });
        }
        Ok(())
    }
}

/// A frozen source of detections on a paired sample.
pub trait VisionGuide {
    fn detect(&self, sample: &PairedSample, score_threshold: f64) -> Result<DetectionSet>;
}

/// A frozen source of per-category probabilities for a paired sample.
pub trait ReportGuide {
    fn classify(&self, sample: &PairedSample) -> Result<Vec<f64>>;
}

impl VisionGuide for ModelHandle {
    fn detect(&self, sample: &PairedSample, score_threshold: f64) -> Result<DetectionSet> {
        vision_predict(self, &sample.image, score_threshold, Some(vision::INFERENCE_NMS_IOU))
    }
}

impl ReportGuide for ModelHandle {
    fn classify(&self, sample: &PairedSample) -> Result<Vec<f64>> {
        report_predict(self, &sample.report)
    }
}

/// A batch for [`analytic_gradient`].
pub enum GradientBatch<'a> {
    Vision(Vec<vision::VisionItem<'a>>),
    Report(Vec<report::ReportItem<'a>>),
}

/// Batch loss and its exact gradient w.r.t. the parameters. Works on
/// frozen models too; freezing gates updates, not differentiation.
pub fn analytic_gradient(model: &ModelHandle, batch: &GradientBatch<'_>, loss: &LossConfig) -> Result<(LossValue, Vec<f64>)> {
    let (value, grad) = match batch {
        GradientBatch::Vision(items) => vision::loss_and_gradient(model, items, loss)?,
        GradientBatch::Report(items) => report::loss_and_gradient(model, items, loss)?,
    };
    if !value.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("loss or gradient"));
    }
    Ok((value, grad))
}
