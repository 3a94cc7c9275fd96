use serde::{Deserialize, Serialize};

use super::ranking::{check_k, top_count, Ranking};
use crate::error::{Error, Result};
use crate::model::{Evaluator, Model};
use crate::types::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbMode {
    /// Overwrite with the pad value, keeping the length.
    #[default]
    Pad,
    /// Remove the positions outright.
    Delete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    Top,
    NonTop,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    E,
    Two,
    Ten,
}

impl LogBase {
    pub fn log(self, v: f64) -> f64 {
        match self {
            LogBase::E => v.ln(),
            LogBase::Two => v.log2(),
            LogBase::Ten => v.log10(),
        }
    }
}

/// Indices affected by perturbing `which` at `k` percent.
pub fn perturbed_indices(r: &Ranking, k: f64, which: Region) -> Result<Vec<usize>> {
    check_k(k)?;
    let c = top_count(r.len(), k);
    let mut idx: Vec<usize> = match which {
        Region::Top => r.order()[..c].to_vec(),
        Region::NonTop => r.order()[c..].to_vec(),
    };
    idx.sort_unstable();
    Ok(idx)
}

pub fn perturb(x: &Instance, r: &Ranking, k: f64, which: Region, mode: PerturbMode) -> Result<Instance> {
    if r.len() != x.len() {
        return Err(Error::Composition {
            expected: x.len(),
            actual: r.len(),
        });
    }
    let idx = perturbed_indices(r, k, which)?;
    let mut hit = vec![false; x.len()];
    for &i in &idx {
        hit[i] = true;
    }
    let features: Vec<_> = match mode {
        PerturbMode::Pad => x
            .features()
            .iter()
            .zip(&hit)
            .map(|(&t, &h)| if h { x.pad() } else { t })
            .collect(),
        PerturbMode::Delete => x
            .features()
            .iter()
            .zip(&hit)
            .filter(|(_, &h)| !h)
            .map(|(&t, _)| t)
            .collect(),
    };
    Ok(Instance::from_raw(features, x.pad()))
}

/// Model confidence in the originally predicted class before and after
/// perturbing the top and the non-top features of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceTerms {
    pub predicted: usize,
    pub original: f64,
    pub top_perturbed: f64,
    pub non_top_perturbed: f64,
}

/// Per-instance terms at one `k`. Predictions run in a single batch.
pub fn instance_terms(
    model: &dyn Model,
    data: &[(Instance, Ranking)],
    k: f64,
    mode: PerturbMode,
    workers: usize,
) -> Result<Vec<InstanceTerms>> {
    check_k(k)?;
    let mut batch = Vec::with_capacity(3 * data.len());
    for (x, r) in data {
        batch.push(x.clone());
        batch.push(perturb(x, r, k, Region::Top, mode)?);
        batch.push(perturb(x, r, k, Region::NonTop, mode)?);
    }
    let preds = Evaluator::new(model, workers, 256)?.predictions(&batch)?;
    Ok(preds
        .chunks(3)
        .map(|p| {
            let y = p[0].argmax();
            InstanceTerms {
                predicted: y,
                original: p[0].prob(y),
                top_perturbed: p[1].prob(y),
                non_top_perturbed: p[2].prob(y),
            }
        })
        .collect())
}

fn mean(values: impl ExactSizeIterator<Item = Result<f64>>) -> Result<f64> {
    let n = values.len();
    if n == 0 {
        return Err(Error::Argument("no instances to evaluate".into()));
    }
    let mut sum = 0.0;
    for v in values {
        sum += v?;
    }
    Ok(sum / n as f64)
}

pub fn log_odds_from_terms(terms: &[InstanceTerms], base: LogBase) -> Result<f64> {
    mean(terms.iter().enumerate().map(|(i, t)| {
        if t.original <= 0.0 {
            return Err(Error::Metric {
                instance: i,
                reason: "f(x) = 0".into(),
            });
        }
        if t.top_perturbed <= 0.0 {
            return Err(Error::Metric {
                instance: i,
                reason: "f(x') = 0, log-odds is -inf".into(),
            });
        }
        Ok(base.log(t.top_perturbed / t.original))
    }))
}

pub fn sufficiency_from_terms(terms: &[InstanceTerms]) -> Result<f64> {
    mean(terms.iter().map(|t| Ok(t.original - t.non_top_perturbed)))
}

pub fn comprehensiveness_from_terms(terms: &[InstanceTerms]) -> Result<f64> {
    mean(terms.iter().map(|t| Ok(t.original - t.top_perturbed)))
}

/// Mean `ln(f(x') / f(x))` with the top `k` percent perturbed.
pub fn log_odds(model: &dyn Model, data: &[(Instance, Ranking)], k: f64, mode: PerturbMode) -> Result<f64> {
    log_odds_from_terms(&instance_terms(model, data, k, mode, 1)?, LogBase::E)
}

/// Mean `f(x) - f(x')` with everything but the top `k` percent perturbed.
pub fn sufficiency(model: &dyn Model, data: &[(Instance, Ranking)], k: f64, mode: PerturbMode) -> Result<f64> {
    sufficiency_from_terms(&instance_terms(model, data, k, mode, 1)?)
}

/// Mean `f(x) - f(x')` with the top `k` percent perturbed.
pub fn comprehensiveness(
    model: &dyn Model,
    data: &[(Instance, Ranking)],
    k: f64,
    mode: PerturbMode,
) -> Result<f64> {
    comprehensiveness_from_terms(&instance_terms(model, data, k, mode, 1)?)
}
