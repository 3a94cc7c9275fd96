//! Exact Shapley values by enumerating every coalition, with expectations
//! taken exactly over a tabular joint.

use std::collections::HashMap;

use crate::distributions::TabularJointModel;
use crate::error::{Error, Result};
use crate::model::{Evaluator, Model};
use crate::types::{
    compose_mask, full_mask, AttributionMeta, AttributionVector, BaselineKind, Instance,
    PartialInstance, Token,
};

/// Upper bound on `n` for exhaustive enumeration.
pub const MAX_EXACT_FEATURES: usize = 20;

/// Configuration for exact value-function evaluation.
#[derive(Clone, Copy)]
pub struct ExactSpec<'a> {
    pub model: &'a dyn Model,
    pub target_label: usize,
    pub baseline: BaselineKind,
    pub include_baseline_expectation: bool,
}

/// `v(S)` for every coalition, indexed by bitmask. `None` marks a
/// coalition whose observed values have zero probability under the joint
/// (conditional baseline only).
#[derive(Debug, Clone)]
pub struct ExactValues {
    values: Vec<Option<f64>>,
    n: usize,
    baseline_expectation: f64,
}

impl ExactValues {
    pub fn compute(spec: &ExactSpec<'_>, x: &Instance, joint: &TabularJointModel) -> Result<Self> {
        let n = x.len();
        if n > MAX_EXACT_FEATURES {
            return Err(Error::Capacity {
                n,
                limit: MAX_EXACT_FEATURES,
            });
        }
        if joint.len() != n {
            return Err(Error::Composition {
                expected: n,
                actual: joint.len(),
            });
        }
        if spec.target_label >= spec.model.label_count() {
            return Err(Error::Argument(format!(
                "target label {} out of range",
                spec.target_label
            )));
        }
        let masks = 1usize << n;
        let full = full_mask(n);
        let support: Vec<(Instance, f64)> = joint
            .support()
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(f, p)| (Instance::from_raw(f.clone(), x.pad()), *p))
            .collect();

        // Distinct instances to score, and per-mask weighted references into them.
        let mut index: HashMap<Vec<Token>, usize> = HashMap::new();
        let mut batch: Vec<Instance> = Vec::new();
        let mut intern = |inst: Instance| -> usize {
            let len = batch.len();
            *index.entry(inst.features().to_vec()).or_insert_with(|| {
                batch.push(inst);
                len
            })
        };
        let mut terms: Vec<Option<Vec<(usize, f64)>>> = Vec::with_capacity(masks);
        for mask in 0..masks as u64 {
            let t = match spec.baseline {
                BaselineKind::Random => Some(
                    support
                        .iter()
                        .map(|(donor, p)| (intern(compose_mask(x, mask, donor)), *p))
                        .collect(),
                ),
                BaselineKind::Conditional if mask == full => Some(vec![(intern(x.clone()), 1.0)]),
                BaselineKind::Conditional => {
                    match joint.completions(&PartialInstance::from_mask(x, mask)) {
                        Ok(c) => Some(
                            c.into_iter()
                                .map(|(f, w)| (intern(Instance::from_raw(f.to_vec(), x.pad())), w))
                                .collect(),
                        ),
                        Err(Error::Conditioning(_)) => None,
                        Err(e) => return Err(e),
                    }
                }
            };
            terms.push(t);
        }
        let base_terms: Vec<(usize, f64)> = support
            .iter()
            .map(|(d, p)| (intern(d.clone()), *p))
            .collect();

        let scores = Evaluator::new(spec.model, 1, 1024)?.scores(&batch, spec.target_label)?;
        let expect = |t: &[(usize, f64)]| t.iter().map(|&(k, w)| w * scores[k]).sum::<f64>();
        let baseline_expectation = expect(&base_terms);
        let shift = if spec.include_baseline_expectation {
            baseline_expectation
        } else {
            0.0
        };
        let values = terms
            .iter()
            .map(|t| t.as_deref().map(|t| expect(t) - shift))
            .collect();
        Ok(Self {
            values,
            n,
            baseline_expectation,
        })
    }

    pub fn get(&self, mask: u64) -> Option<f64> {
        self.values[mask as usize]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `E_joint[f_y(X')]`, regardless of whether it is subtracted.
    pub fn baseline_expectation(&self) -> f64 {
        self.baseline_expectation
    }
}

/// `|S|! (n - 1 - |S|)! / n!`, computed as `1 / (n * C(n-1, |S|))`.
pub fn shapley_weight(n: usize, s: usize) -> f64 {
    let k = s.min(n - 1 - s);
    let mut binom = 1.0f64;
    for j in 0..k {
        binom = binom * (n - 1 - j) as f64 / (j + 1) as f64;
    }
    1.0 / (n as f64 * binom.round())
}

/// Exact attribution and the number of marginal terms skipped because a
/// coalition had zero probability.
#[derive(Debug, Clone)]
pub struct ExactShapley {
    pub attribution: AttributionVector,
    pub skipped_terms: usize,
}

/// Shapley values by summing weighted marginal contributions over all
/// coalitions, with expectations taken exactly over `joint`.
pub fn exact_shapley(
    spec: &ExactSpec<'_>,
    x: &Instance,
    joint: &TabularJointModel,
) -> Result<ExactShapley> {
    let values = ExactValues::compute(spec, x, joint)?;
    let n = x.len();
    let weights: Vec<f64> = (0..n).map(|s| shapley_weight(n, s)).collect();
    let mut phi = vec![0.0; n];
    let mut skipped = 0;
    for (i, phi_i) in phi.iter_mut().enumerate() {
        let bit = 1u64 << i;
        for mask in 0..(1u64 << n) {
            if mask & bit != 0 {
                continue;
            }
            match (values.get(mask | bit), values.get(mask)) {
                (Some(with), Some(without)) => {
                    *phi_i += weights[mask.count_ones() as usize] * (with - without);
                }
                _ => skipped += 1,
            }
        }
    }
    if skipped > 0 {
        log::warn!("exact Shapley skipped {skipped} zero-probability marginal terms");
    }
    Ok(ExactShapley {
        attribution: AttributionVector::new(
            phi,
            AttributionMeta {
                baseline: spec.baseline,
                m: None,
                seed: None,
                reweighted: false,
            },
        )?,
        skipped_terms: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearModel;

    const PAD: Token = Token(9);

    #[test]
    fn weights_sum_to_one_over_subsets() {
        for n in 1..=12usize {
            let total: f64 = (0..n)
                .map(|s| {
                    let count = (0..s).fold(1.0, |c, j| c * (n - 1 - j) as f64 / (j + 1) as f64);
                    count * shapley_weight(n, s)
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert_eq!(shapley_weight(2, 0), 0.5);
        assert_eq!(shapley_weight(3, 1), 1.0 / 6.0);
    }

    #[test]
    fn independent_pair_first_feature_only() {
        // f = x1 over independent uniform bits, x = (1, 1): phi = (0.5, 0).
        let marg = vec![(Token(0), 0.5), (Token(1), 0.5)];
        let joint = TabularJointModel::independent(&[marg.clone(), marg], PAD).unwrap();
        let model = LinearModel::new(vec![1.0, 0.0], 0.0, [(Token(0), 0.0), (Token(1), 1.0)].into());
        let x = Instance::new(vec![Token(1), Token(1)], PAD).unwrap();
        let spec = ExactSpec {
            model: &model,
            target_label: 1,
            baseline: BaselineKind::Random,
            include_baseline_expectation: false,
        };
        let r = exact_shapley(&spec, &x, &joint).unwrap();
        assert_eq!(r.attribution.phi, vec![0.5, 0.0]);
        assert_eq!(r.skipped_terms, 0);
    }

    #[test]
    fn capacity_guard() {
        let joint = TabularJointModel::new(vec![(vec![Token(0); 21], 1.0)], PAD).unwrap();
        let model = LinearModel::new(vec![1.0; 21], 0.0, [(Token(0), 0.0)].into());
        let x = Instance::new(vec![Token(0); 21], PAD).unwrap();
        let spec = ExactSpec {
            model: &model,
            target_label: 1,
            baseline: BaselineKind::Random,
            include_baseline_expectation: false,
        };
        assert!(matches!(
            exact_shapley(&spec, &x, &joint),
            Err(Error::Capacity { n: 21, .. })
        ));
    }
}
