//! Attribution methods addressable by name.

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Result};
use asymshap::engine::{exact_shapley, shapley_sampling, ExactSpec};
use asymshap::eval::{rank_features, Ranking};
use asymshap::{AttributionVector, BaselineKind, Instance, SamplingConfig, ValueFunctionSpec};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::setup::Setup;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Method {
    pub baseline: BaselineKind,
    pub exact: bool,
    pub reweighted: bool,
}

impl Method {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            baseline: cfg.baseline.kind,
            exact: cfg.sampling.exact,
            reweighted: cfg.sampling.reweighted && !cfg.sampling.exact,
        }
    }

    /// The configured method list, or the single method the flags describe.
    pub fn list(cfg: &RunConfig) -> Result<Vec<Self>> {
        if cfg.methods.is_empty() {
            return Ok(vec![Self::from_config(cfg)]);
        }
        cfg.methods
            .iter()
            .enumerate()
            .map(|(i, s)| s.parse().map_err(|e| anyhow::anyhow!("methods[{i}]: {e}")))
            .collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exact {
            write!(f, "exact-{}", self.baseline)
        } else if self.reweighted {
            write!(f, "{}-reweighted", self.baseline)
        } else {
            write!(f, "{}", self.baseline)
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (exact, rest) = match s.strip_prefix("exact-") {
            Some(r) => (true, r),
            None => (false, s),
        };
        let (reweighted, base) = match rest.strip_suffix("-reweighted") {
            Some(b) if !exact => (true, b),
            _ => (false, rest),
        };
        let baseline = match base {
            "random" => BaselineKind::Random,
            "conditional" => BaselineKind::Conditional,
            _ => {
                return Err(format!(
                    "unknown method {s:?} (expected [exact-]random|conditional or random|conditional-reweighted)"
                ))
            }
        };
        Ok(Self {
            baseline,
            exact,
            reweighted,
        })
    }
}

/// One explained instance, as written to `attributions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub id: usize,
    pub method: String,
    pub tokens: Vec<String>,
    pub target: usize,
    pub phi: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    /// Features, most influential first.
    pub order: Vec<usize>,
    pub m: Option<usize>,
    pub seed: Option<u64>,
}

pub fn attribute(
    setup: &Setup,
    cfg: &RunConfig,
    method: Method,
    seed: u64,
    id: usize,
    x: &Instance,
) -> Result<(AttributionRecord, Ranking)> {
    let target = setup.target(cfg, x)?;
    let (attr, stderr): (AttributionVector, _) = if method.exact {
        let joint = setup.joint_for(x)?;
        let spec = ExactSpec {
            model: setup.model.as_ref(),
            target_label: target,
            baseline: method.baseline,
            include_baseline_expectation: cfg.sampling.include_baseline_expectation,
        };
        (exact_shapley(&spec, x, joint)?.attribution, None)
    } else {
        let spec = ValueFunctionSpec::new(setup.model.clone(), target, setup.donors(method.baseline)?)?
            .with_baseline_expectation(cfg.sampling.include_baseline_expectation);
        let sampling = SamplingConfig {
            m: cfg.sampling.m,
            seed,
            reweighted: method.reweighted,
            include_baseline_expectation: cfg.sampling.include_baseline_expectation,
            workers: cfg.sampling.workers,
            batch_size: cfg.sampling.batch_size,
            ..SamplingConfig::default()
        };
        let est = shapley_sampling(&spec, x, &sampling)?;
        (est.attribution, est.stderr)
    };
    if attr.phi.len() != x.len() {
        bail!("attribution has {} entries for {} features", attr.phi.len(), x.len());
    }
    let ranking = rank_features(&attr, cfg.eval.ranking_rule);
    let record = AttributionRecord {
        id,
        method: method.to_string(),
        tokens: setup.names(x),
        target,
        phi: attr.phi,
        stderr,
        order: ranking.order().to_vec(),
        m: attr.meta.m,
        seed: attr.meta.seed,
    };
    Ok((record, ranking))
}
