//! Bag-of-words multi-label classifier over report token counts.

use serde::{Deserialize, Serialize};

use super::{Arch, ModelHandle, Role};
use crate::error::{Error, Result};
use crate::losses::{report_loss, sigmoid, LossConfig, LossValue, ReportLossItem};
use crate::synthdata::ReportTokens;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportArch {
    pub vocab_size: usize,
    pub num_classes: usize,
}

impl ReportArch {
    /// Weights are laid out class-major: `params[k * (V + 1) + t]`, with
    /// `t = V` the bias.
    pub fn num_params(&self) -> usize {
        self.num_classes * (self.vocab_size + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.num_classes == 0 {
            return Err(Error::Config("report arch dimensions must be positive".into()));
        }
        Ok(())
    }
}

fn report_arch(model: &ModelHandle) -> Result<&ReportArch> {
    model.expect_role(Role::Report)?;
    match &model.arch {
        Arch::Report(a) => Ok(a),
        Arch::Vision(_) => unreachable!("role checked above"),
    }
}

pub fn report_logits(model: &ModelHandle, report: &ReportTokens) -> Result<Vec<f64>> {
    let arch = report_arch(model)?;
    if report.vocab_size != arch.vocab_size {
        return Err(Error::DimensionMismatch {
            expected: arch.vocab_size,
            actual: report.vocab_size,
        });
    }
    let stride = arch.vocab_size + 1;
    let p = model.params();
    Ok((0..arch.num_classes)
        .map(|k| {
            let row = &p[k * stride..(k + 1) * stride];
            report
                .counts
                .iter()
                .fold(row[arch.vocab_size], |acc, &(t, n)| acc + row[t as usize] * n as f64)
        })
        .collect())
}

/// Per-category probabilities, each in `[0, 1]`.
pub fn report_predict(model: &ModelHandle, report: &ReportTokens) -> Result<Vec<f64>> {
    Ok(report_logits(model, report)?.into_iter().map(sigmoid).collect())
}

/// One report in a gradient batch.
pub struct ReportItem<'a> {
    pub report: &'a ReportTokens,
    pub targets: Vec<u8>,
    pub labeled: bool,
}

pub fn loss_and_gradient(model: &ModelHandle, items: &[ReportItem<'_>], cfg: &LossConfig) -> Result<(LossValue, Vec<f64>)> {
    let arch = report_arch(model)?;
    let logits = items
        .iter()
        .map(|it| report_logits(model, it.report))
        .collect::<Result<Vec<_>>>()?;
    let loss_items: Vec<ReportLossItem<'_>> = items
        .iter()
        .zip(&logits)
        .map(|(it, z)| ReportLossItem {
            logits: z,
            targets: &it.targets,
            labeled: it.labeled,
        })
        .collect();
    let (value, grads) = report_loss(&loss_items, cfg.unsup_weight)?;
    let stride = arch.vocab_size + 1;
    let mut grad = vec![0.0; arch.num_params()];
    for (it, g) in items.iter().zip(&grads) {
        for (k, &gk) in g.iter().enumerate() {
            let row = &mut grad[k * stride..(k + 1) * stride];
            row[arch.vocab_size] += gk;
            for &(t, n) in &it.report.counts {
                row[t as usize] += gk * n as f64;
            }
        }
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> Arch {
        Arch::Report(ReportArch {
            vocab_size: 6,
            num_classes: 2,
        })
    }

    #[test]
    fn hand_computed_logits() {
        // class 0: w = [1, 0, 0, 0, 0, 0], b = -0.5; class 1: w_2 = 2, b = 0
        let mut p = vec![0.0; 14];
        p[0] = 1.0;
        p[6] = -0.5;
        p[7 + 2] = 2.0;
        let m = ModelHandle::from_params(arch(), p).unwrap();
        let r = ReportTokens::from_tokens(6, &[0, 0, 2, 5]);
        let z = report_logits(&m, &r).unwrap();
        assert_eq!(z, vec![1.5, 2.0]);
        let probs = report_predict(&m, &r).unwrap();
        assert!((probs[0] - 1.0 / (1.0 + (-1.5f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn vocab_mismatch_rejected() {
        let m = ModelHandle::zeros(arch());
        let r = ReportTokens::from_tokens(7, &[1]);
        assert!(matches!(report_predict(&m, &r), Err(Error::DimensionMismatch { .. })));
    }
}
