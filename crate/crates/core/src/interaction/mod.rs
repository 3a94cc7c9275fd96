//! Pointwise mutual information, the symmetric Shapley interaction index,
//! the directed (asymmetric) interaction index and influence graphs.
//!
//! Everything here is exact over a [`TabularJointModel`]: `p(y | x_S)` is the
//! mixture of model outputs over the joint's completions of `x_S`. All
//! logarithms are natural.

mod asymmetric;
mod graph;
mod symmetric;

use std::collections::HashMap;
use std::sync::Arc;

use crate::distributions::{ConditionalProvider, TabularJointModel};
use crate::engine::iteration_rng;
use crate::error::{Error, Result};
use crate::model::{Evaluator, Model};
use crate::types::{Coalition, Instance, PartialInstance};

pub use asymmetric::{
    asymmetric_interaction, first_sum_coalitions, first_sum_count, second_sum_count,
    second_sum_pairs, MAX_ASYMMETRIC_FEATURES,
};
pub use graph::{build_influence_graph, replacement_bias, InfluenceGraph, InteractionEdge};
pub use symmetric::{symmetric_interaction, MAX_SYMMETRIC_FEATURES};

/// A joint over features plus a classifier and the label of interest.
#[derive(Clone)]
pub struct WorldModel {
    pub joint: Arc<TabularJointModel>,
    pub model: Arc<dyn Model>,
    pub target_label: usize,
}

impl WorldModel {
    pub fn new(
        joint: Arc<TabularJointModel>,
        model: Arc<dyn Model>,
        target_label: usize,
    ) -> Result<Self> {
        if target_label >= model.label_count() {
            return Err(Error::Argument(format!(
                "target label {target_label} out of range for {} labels",
                model.label_count()
            )));
        }
        Ok(Self {
            joint,
            model,
            target_label,
        })
    }
}

/// Cached `p(y | x_S)` for one instance, keyed by coalition mask.
pub struct Posterior<'w> {
    world: &'w WorldModel,
    x: Instance,
    /// `(support features, p(point), p(y | point))`
    points: Vec<(Vec<crate::types::Token>, f64, f64)>,
    cache: HashMap<u64, Result<f64, String>>,
}

impl<'w> Posterior<'w> {
    pub fn new(world: &'w WorldModel, x: &Instance) -> Result<Self> {
        if x.len() != world.joint.len() {
            return Err(Error::Composition {
                expected: world.joint.len(),
                actual: x.len(),
            });
        }
        if x.len() > 63 {
            return Err(Error::Capacity { n: x.len(), limit: 63 });
        }
        let support: Vec<&(Vec<crate::types::Token>, f64)> =
            world.joint.support().iter().filter(|(_, p)| *p > 0.0).collect();
        let batch: Vec<Instance> = support
            .iter()
            .map(|(f, _)| Instance::new(f.clone(), x.pad()))
            .collect::<Result<_>>()?;
        let preds = Evaluator::new(world.model.as_ref(), 1, 1024)?.predictions(&batch)?;
        let points = support
            .iter()
            .zip(&preds)
            .map(|((f, p), d)| (f.clone(), *p, d.prob(world.target_label)))
            .collect();
        Ok(Self {
            world,
            x: x.clone(),
            points,
            cache: HashMap::new(),
        })
    }

    pub fn instance(&self) -> &Instance {
        &self.x
    }

    pub fn world(&self) -> &WorldModel {
        self.world
    }

    fn describe(&self, mask: u64) -> String {
        let obs = PartialInstance::from_mask(&self.x, mask);
        let parts: Vec<String> = obs
            .observed()
            .iter()
            .map(|(i, t)| format!("x{i}={t}"))
            .collect();
        format!("{{{}}}", parts.join(", "))
    }

    /// `p(y | x_S)` for the coalition with bitmask `mask`.
    pub fn label_given(&mut self, mask: u64) -> Result<f64> {
        if let Some(r) = self.cache.get(&mask) {
            return r.clone().map_err(Error::Conditioning);
        }
        let obs = PartialInstance::from_mask(&self.x, mask);
        let (mut mass, mut acc) = (0.0, 0.0);
        for (f, p, fy) in &self.points {
            if obs.is_consistent(f) {
                mass += p;
                acc += p * fy;
            }
        }
        let r = if mass > 0.0 {
            Ok(acc / mass)
        } else {
            Err(format!("observation {} has zero probability", self.describe(mask)))
        };
        self.cache.insert(mask, r.clone());
        r.map_err(Error::Conditioning)
    }

    /// `ln p(y | x_T, x_S) - ln p(y | x_S)`.
    pub fn pmi(&mut self, target: u64, given: u64) -> Result<f64> {
        if target & !given == 0 {
            // Nothing new is observed; still validate the conditioning event.
            self.label_given(given)?;
            return Ok(0.0);
        }
        let joint = self.label_given(target | given)?;
        let base = self.label_given(given)?;
        if joint <= 0.0 {
            return Err(Error::NegativeInfinity(self.describe(target | given)));
        }
        if base <= 0.0 {
            return Err(Error::NegativeInfinity(self.describe(given)));
        }
        Ok(joint.ln() - base.ln())
    }
}

/// Pointwise mutual information `I(y; x_T | x_S)` in nats.
pub fn pmi(world: &WorldModel, x: &Instance, target: &Coalition, given: &Coalition) -> Result<f64> {
    if target.n() != x.len() || given.n() != x.len() {
        return Err(Error::Argument("coalition length differs from the instance".into()));
    }
    Posterior::new(world, x)?.pmi(target.mask(), given.mask())
}

/// Monte Carlo pointwise mutual information for black-box worlds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmiEstimate {
    pub value: f64,
    /// Delta-method standard error.
    pub stderr: f64,
}

/// Estimates `I(y; x_T | x_S)` by averaging the model's probability of `y`
/// over `m` provider completions of `x_{T u S}` and of `x_S`.
#[allow(clippy::too_many_arguments)]
pub fn pmi_monte_carlo(
    model: &dyn Model,
    provider: &dyn ConditionalProvider,
    x: &Instance,
    target: &Coalition,
    given: &Coalition,
    label: usize,
    m: usize,
    seed: u64,
) -> Result<PmiEstimate> {
    if m < 2 {
        return Err(Error::Config("Monte Carlo pmi needs m >= 2".into()));
    }
    let joint_mask = target.mask() | given.mask();
    let mut batch = Vec::with_capacity(2 * m);
    for (stream, mask) in [(0usize, joint_mask), (1, given.mask())] {
        let observed = PartialInstance::from_mask(x, mask);
        for t in 0..m {
            let mut rng = iteration_rng(seed, stream, t);
            let c = provider.sample_completion(&observed, &mut rng)?;
            batch.push(Instance::new(c.into_features(), x.pad())?);
        }
    }
    let preds = Evaluator::new(model, 1, 256)?.predictions(&batch)?;
    let probs: Vec<f64> = preds.iter().map(|d| d.prob(label)).collect();
    let stats = |s: &[f64]| {
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s.len() - 1) as f64;
        (mean, var)
    };
    let (p_joint, v_joint) = stats(&probs[..m]);
    let (p_given, v_given) = stats(&probs[m..]);
    if p_joint <= 0.0 || p_given <= 0.0 {
        return Err(Error::NegativeInfinity("sampled completions".into()));
    }
    let mf = m as f64;
    Ok(PmiEstimate {
        value: p_joint.ln() - p_given.ln(),
        stderr: (v_joint / (mf * p_joint * p_joint) + v_given / (mf * p_given * p_given)).sqrt(),
    })
}
