//! Permutation-sampling Shapley estimator.
//!
//! For each feature `i` and iteration `t` a permutation `O` is drawn and two
//! instances are built: `x1` keeps `x` on the predecessors of `i` in `O`
//! and on `i` itself, `x2` keeps `x` only on the predecessors. Everything
//! else comes from the donor source. The update is `f_y(x1) - f_y(x2)`, or
//! `f_y(x1) - H(x'_i) * f_y(x2)` with reweighting, where `H` is the
//! normalized entropy of the model's prediction given the replacement.
//!
//! Every `(i, t)` pair owns its own ChaCha stream, and contributions are
//! reduced sequentially in iteration order, so results are bit-identical
//! for any worker count.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ValueFunctionSpec;
use crate::error::{Error, Result};
use crate::model::Evaluator;
use crate::types::{
    normalized_entropy, AttributionMeta, AttributionVector, EntropyInput, Instance,
    SamplingConfig, Token,
};

/// Iterations planned and evaluated together.
const CHUNK: usize = 4096;

/// Attribution plus per-feature standard errors (absent when `m = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyEstimate {
    pub attribution: AttributionVector,
    pub stderr: Option<Vec<f64>>,
}

/// Deterministic generator for iteration `t` of feature `i`.
pub fn iteration_rng(seed: u64, feature: usize, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((feature as u64) << 40) ^ iteration as u64);
    rng
}

struct Plan {
    with_i: Instance,
    without_i: Instance,
    replacement: Token,
}

fn plan_iteration(
    spec: &ValueFunctionSpec,
    x: &Instance,
    i: usize,
    seed: u64,
    t: usize,
) -> Result<Plan> {
    let n = x.len();
    let mut rng = iteration_rng(seed, i, t);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let pos = order.iter().position(|&j| j == i).expect("i in permutation");
    let preceding = order[..pos].iter().fold(0u64, |m, &j| m | 1 << j);
    let with_mask = preceding | 1 << i;

    let (with_i, without_i) = match &spec.donors {
        super::DonorSource::Random(_) => {
            // One donor serves both instances.
            let donor = spec.donors.fill(x, 0, &mut rng)?;
            (
                crate::types::compose_mask(x, with_mask, &donor),
                crate::types::compose_mask(x, preceding, &donor),
            )
        }
        super::DonorSource::Conditional(_) => {
            let a = spec.donors.fill(x, with_mask, &mut rng)?;
            let b = spec.donors.fill(x, preceding, &mut rng)?;
            (a, b)
        }
    };
    let replacement = without_i.features()[i];
    Ok(Plan {
        with_i,
        without_i,
        replacement,
    })
}

/// Estimates every feature's Shapley value with `cfg.m` permutation samples.
pub fn shapley_sampling(
    spec: &ValueFunctionSpec,
    x: &Instance,
    cfg: &SamplingConfig,
) -> Result<ShapleyEstimate> {
    cfg.validate()?;
    if x.is_empty() {
        return Err(Error::Argument("cannot attribute an empty instance".into()));
    }
    let n = x.len();
    if n > 64 {
        return Err(Error::Capacity { n, limit: 64 });
    }
    let model = spec.model.as_ref();
    let evaluator = Evaluator::new(model, cfg.workers, cfg.batch_size)?;
    let planner = if cfg.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.workers)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let mut phi = Vec::with_capacity(n);
    let mut stderr = Vec::with_capacity(n);
    for i in 0..n {
        let mut contributions = Vec::with_capacity(cfg.m);
        // Singleton entropies depend only on the replacement token.
        let mut singleton_weight: HashMap<Token, f64> = HashMap::new();
        let mut start = 0;
        while start < cfg.m {
            let end = (start + CHUNK).min(cfg.m);
            let plan_one = |t: usize| plan_iteration(spec, x, i, cfg.seed, t);
            let plans: Vec<Plan> = match &planner {
                Some(pool) => pool.install(|| {
                    (start..end).into_par_iter().map(plan_one).collect::<Result<_>>()
                })?,
                None => (start..end).map(plan_one).collect::<Result<_>>()?,
            };
            let mut batch = Vec::with_capacity(2 * plans.len());
            batch.extend(plans.iter().map(|p| p.with_i.clone()));
            batch.extend(plans.iter().map(|p| p.without_i.clone()));
            let scores = evaluator.scores(&batch, spec.target_label)?;
            let (f1, f2) = scores.split_at(plans.len());

            let weights: Vec<f64> = if !cfg.reweighted {
                vec![1.0; plans.len()]
            } else {
                match cfg.entropy_input {
                    EntropyInput::Singleton => {
                        let mut fresh: Vec<Token> = plans
                            .iter()
                            .map(|p| p.replacement)
                            .filter(|t| !singleton_weight.contains_key(t))
                            .collect();
                        fresh.sort_unstable();
                        fresh.dedup();
                        let probes: Vec<Instance> = fresh
                            .iter()
                            .map(|&v| Instance::padded(n, x.pad()).with_value(i, v))
                            .collect::<Result<_>>()?;
                        for (v, d) in fresh.iter().zip(evaluator.predictions(&probes)?) {
                            singleton_weight.insert(*v, normalized_entropy(&d)?);
                        }
                        plans.iter().map(|p| singleton_weight[&p.replacement]).collect()
                    }
                    EntropyInput::Composed => {
                        let probes: Vec<Instance> =
                            plans.iter().map(|p| p.without_i.clone()).collect();
                        evaluator
                            .predictions(&probes)?
                            .iter()
                            .map(normalized_entropy)
                            .collect::<Result<_>>()?
                    }
                }
            };
            contributions.extend(
                f1.iter()
                    .zip(f2)
                    .zip(&weights)
                    .map(|((a, b), w)| a - w * b),
            );
            start = end;
        }
        let m = contributions.len() as f64;
        let mean = contributions.iter().sum::<f64>() / m;
        phi.push(mean);
        if contributions.len() > 1 {
            let var = contributions.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (m - 1.0);
            stderr.push((var / m).sqrt());
        }
    }
    Ok(ShapleyEstimate {
        attribution: AttributionVector::new(
            phi,
            AttributionMeta {
                baseline: spec.donors.kind(),
                m: Some(cfg.m),
                seed: Some(cfg.seed),
                reweighted: cfg.reweighted,
            },
        )?,
        stderr: (cfg.m > 1).then_some(stderr),
    })
}
