//! Value function, exact Shapley values, Shapley Sampling with random or
//! conditional baselines, and uncertainty-based reweighting.

mod exact;
mod replacement;
mod sampling;

use std::sync::Arc;

use rand::RngCore;

use crate::distributions::{ConditionalProvider, DonorPool};
use crate::error::{Error, Result};
use crate::model::{Evaluator, Model};
use crate::types::{BaselineKind, Coalition, Instance, PartialInstance};

pub use exact::{exact_shapley, shapley_weight, ExactShapley, ExactSpec, ExactValues, MAX_EXACT_FEATURES};
pub use replacement::select_uninformative_replacement;
pub use sampling::{iteration_rng, shapley_sampling, ShapleyEstimate};

/// Where replacement values for unobserved features come from.
#[derive(Clone)]
pub enum DonorSource {
    /// Whole donor instances drawn from a pool (dataset or joint).
    Random(Arc<dyn DonorPool>),
    /// Completions sampled conditionally on the observed features.
    Conditional(Arc<dyn ConditionalProvider>),
}

impl DonorSource {
    pub fn kind(&self) -> BaselineKind {
        match self {
            DonorSource::Random(_) => BaselineKind::Random,
            DonorSource::Conditional(_) => BaselineKind::Conditional,
        }
    }

    /// Keeps `x` on `observed_mask` and fills the rest from this source.
    pub(crate) fn fill(
        &self,
        x: &Instance,
        observed_mask: u64,
        rng: &mut dyn RngCore,
    ) -> Result<Instance> {
        match self {
            DonorSource::Random(pool) => {
                let donor = pool.draw_donor(x.len(), x.pad(), rng)?;
                Ok(crate::types::compose_mask(x, observed_mask, &donor))
            }
            DonorSource::Conditional(provider) => {
                let observed = PartialInstance::from_mask(x, observed_mask);
                let c = provider.sample_completion(&observed, rng)?;
                if !observed.is_consistent(c.features()) {
                    return Err(Error::Sampling(
                        "provider completion disagrees with the observed features".into(),
                    ));
                }
                Ok(Instance::from_raw(c.into_features(), x.pad()))
            }
        }
    }
}

/// Everything needed to evaluate `v(S)` by Monte Carlo.
#[derive(Clone)]
pub struct ValueFunctionSpec {
    pub model: Arc<dyn Model>,
    pub target_label: usize,
    pub donors: DonorSource,
    pub include_baseline_expectation: bool,
}

impl ValueFunctionSpec {
    pub fn new(model: Arc<dyn Model>, target_label: usize, donors: DonorSource) -> Result<Self> {
        if target_label >= model.label_count() {
            return Err(Error::Argument(format!(
                "target label {target_label} out of range for {} labels",
                model.label_count()
            )));
        }
        Ok(Self {
            model,
            target_label,
            donors,
            include_baseline_expectation: false,
        })
    }

    pub fn with_baseline_expectation(mut self, on: bool) -> Self {
        self.include_baseline_expectation = on;
        self
    }
}

/// Monte Carlo estimate of `v(S)`: the mean of `f_y` over `m` donor
/// completions of `x` outside `S`, minus the mean over `m` full donors when
/// the baseline expectation is enabled.
pub fn value_function(
    spec: &ValueFunctionSpec,
    x: &Instance,
    coalition: &Coalition,
    m: usize,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    if m == 0 {
        return Err(Error::Config("sample count m must be at least 1".into()));
    }
    if coalition.n() != x.len() {
        return Err(Error::Composition {
            expected: x.len(),
            actual: coalition.n(),
        });
    }
    let mask = coalition.mask();
    let mut batch = Vec::with_capacity(if spec.include_baseline_expectation { 2 * m } else { m });
    for _ in 0..m {
        batch.push(spec.donors.fill(x, mask, rng)?);
    }
    if spec.include_baseline_expectation {
        for _ in 0..m {
            batch.push(spec.donors.fill(x, 0, rng)?);
        }
    }
    let scores = Evaluator::new(spec.model.as_ref(), 1, 256)?.scores(&batch, spec.target_label)?;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let observed = mean(&scores[..m]);
    Ok(if spec.include_baseline_expectation {
        observed - mean(&scores[m..])
    } else {
        observed
    })
}
