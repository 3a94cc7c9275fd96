//! Independent oracles: everything here is computed by direct summation over
//! the joint's support, without touching the crate's value-function code.
#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use asymshap::model::LookupModel;
use asymshap::{BaselineKind, Instance, LabelDistribution, Model, TabularJointModel, Token};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PAD: Token = Token(99);

pub struct RandomWorld {
    pub joint: TabularJointModel,
    pub model: Arc<LookupModel>,
    pub label: usize,
    pub x: Instance,
}

fn random_distribution(rng: &mut ChaCha8Rng, labels: usize) -> LabelDistribution {
    let raw: Vec<f64> = (0..labels).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    LabelDistribution::new(raw.into_iter().map(|v| v / total).collect()).unwrap()
}

/// All `values^n` points get positive mass; the lookup table covers every
/// point, and the explained instance is drawn from the support.
pub fn random_world(seed: u64, n: usize, values: u32, labels: usize) -> RandomWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<Vec<Token>> = vec![Vec::new()];
    for _ in 0..n {
        points = points
            .into_iter()
            .flat_map(|p| {
                (0..values).map(move |v| {
                    let mut q = p.clone();
                    q.push(Token(v));
                    q
                })
            })
            .collect();
    }
    let weights: Vec<f64> = points.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let support: Vec<(Vec<Token>, f64)> =
        points.iter().cloned().zip(weights.iter().map(|w| w / total)).collect();
    let table: HashMap<Vec<Token>, LabelDistribution> = points
        .iter()
        .map(|p| (p.clone(), random_distribution(&mut rng, labels)))
        .collect();
    let model = LookupModel::new(table, LabelDistribution::uniform(labels)).unwrap();
    let x = Instance::new(points[rng.gen_range(0..points.len())].clone(), PAD).unwrap();
    let label = rng.gen_range(0..labels);
    RandomWorld {
        joint: TabularJointModel::new(support, PAD).unwrap(),
        model: Arc::new(model),
        label,
        x,
    }
}

fn prob(model: &dyn Model, features: Vec<Token>, label: usize) -> f64 {
    model
        .predict(&Instance::new(features, PAD).unwrap())
        .unwrap()
        .prob(label)
}

/// `v(S)` by direct summation. Random: `sum p(x') f(x_S, x'_rest)`.
/// Conditional: the same sum restricted to `x'` agreeing with `x` on `S`,
/// renormalized. `None` when that restriction has no mass.
pub fn direct_value(
    model: &dyn Model,
    joint: &TabularJointModel,
    x: &Instance,
    label: usize,
    coalition: &[usize],
    baseline: BaselineKind,
) -> Option<f64> {
    let mut mass = 0.0;
    let mut acc = 0.0;
    for (donor, p) in joint.support() {
        let agrees = coalition.iter().all(|&i| donor[i] == x.features()[i]);
        if baseline == BaselineKind::Conditional && !agrees {
            continue;
        }
        let mut mixed = donor.clone();
        for &i in coalition {
            mixed[i] = x.features()[i];
        }
        mass += p;
        acc += p * prob(model, mixed, label);
    }
    if baseline == BaselineKind::Conditional && coalition.len() == x.len() {
        return Some(prob(model, x.features().to_vec(), label));
    }
    (mass > 0.0).then(|| acc / mass)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Shapley values as the average marginal contribution over all `n!`
/// orderings.
pub fn permutation_shapley(
    model: &dyn Model,
    joint: &TabularJointModel,
    x: &Instance,
    label: usize,
    baseline: BaselineKind,
) -> Vec<f64> {
    let n = x.len();
    let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut v = |s: &[usize]| {
        let mut key = s.to_vec();
        key.sort_unstable();
        *cache
            .entry(key.clone())
            .or_insert_with(|| direct_value(model, joint, x, label, &key, baseline).expect("positive mass"))
    };
    let perms = permutations(n);
    let mut phi = vec![0.0; n];
    for perm in &perms {
        let mut prefix: Vec<usize> = Vec::new();
        for &i in perm {
            let before = v(&prefix);
            prefix.push(i);
            phi[i] += v(&prefix) - before;
        }
    }
    phi.iter().map(|s| s / perms.len() as f64).collect()
}

/// `p(y = label | x_A)` as a ratio of direct sums over the support.
pub fn direct_label_prob(model: &dyn Model, joint: &TabularJointModel, x: &Instance, label: usize, a: &[usize]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (point, p) in joint.support() {
        if a.iter().all(|&i| point[i] == x.features()[i]) {
            den += p;
            num += p * prob(model, point.clone(), label);
        }
    }
    num / den
}

/// `ln[ p(y, x_T | x_S) / (p(y | x_S) p(x_T | x_S)) ]`, each factor summed
/// separately.
pub fn direct_pmi(
    model: &dyn Model,
    joint: &TabularJointModel,
    x: &Instance,
    label: usize,
    target: &[usize],
    given: &[usize],
) -> f64 {
    let agrees = |point: &[Token], idx: &[usize]| idx.iter().all(|&i| point[i] == x.features()[i]);
    let (mut p_s, mut p_ts, mut p_y_s, mut p_yt_s) = (0.0, 0.0, 0.0, 0.0);
    for (point, p) in joint.support() {
        if !agrees(point, given) {
            continue;
        }
        let fy = prob(model, point.clone(), label);
        p_s += p;
        p_y_s += p * fy;
        if agrees(point, target) {
            p_ts += p;
            p_yt_s += p * fy;
        }
    }
    let joint_term = p_yt_s / p_s;
    let y_term = p_y_s / p_s;
    let t_term = p_ts / p_s;
    (joint_term / (y_term * t_term)).ln()
}

pub fn indices(mask: u64, n: usize) -> Vec<usize> {
    (0..n).filter(|i| mask >> i & 1 == 1).collect()
}

pub mod sentiment_pipeline {
    use asymshap::engine::{exact_shapley, shapley_sampling, ExactSpec};
    use asymshap::eval::{evaluate, rank_features, EvalConfig, EvalReport, PerturbMode, Ranking, RankingRule};
    use asymshap::worlds::{sentiment, World};
    use asymshap::{BaselineKind, DonorSource, Instance, SamplingConfig, ValueFunctionSpec};
    use serde_json::{json, Value};

    pub const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/golden/sentiment.json");
    pub const SAMPLING_M: usize = 10_000;
    pub const SAMPLING_SEED: u64 = 20240601;

    fn predicted(w: &World, x: &Instance) -> usize {
        w.model.predict(x).unwrap().argmax()
    }

    /// Exact attributions toward each instance's predicted class.
    pub fn exact_rankings(w: &World, baseline: BaselineKind) -> Vec<(Instance, Ranking)> {
        w.instances
            .iter()
            .map(|x| {
                let spec = ExactSpec {
                    model: w.model.as_ref(),
                    target_label: predicted(w, x),
                    baseline,
                    include_baseline_expectation: false,
                };
                let attr = exact_shapley(&spec, x, &w.joint).unwrap().attribution;
                (x.clone(), rank_features(&attr, RankingRule::SignedDescending))
            })
            .collect()
    }

    pub fn sampled_rankings(w: &World, m: usize, seed: u64) -> Vec<(Instance, Ranking)> {
        w.instances
            .iter()
            .map(|x| {
                let spec = ValueFunctionSpec::new(w.model.clone(), predicted(w, x), DonorSource::Random(w.joint.clone()))
                    .unwrap();
                let cfg = SamplingConfig { m, seed, ..Default::default() };
                let est = shapley_sampling(&spec, x, &cfg).unwrap();
                (x.clone(), rank_features(&est.attribution, RankingRule::SignedDescending))
            })
            .collect()
    }

    pub fn reports(w: &World, data: &[(Instance, Ranking)], label: &str) -> Vec<EvalReport> {
        [PerturbMode::Pad, PerturbMode::Delete]
            .into_iter()
            .map(|mode| {
                let cfg = EvalConfig { perturb_mode: mode, ..Default::default() };
                evaluate(w.model.as_ref(), data, &cfg, label, 1).unwrap()
            })
            .collect()
    }

    pub fn golden_document() -> Value {
        let w = sentiment();
        let mut out = json!({ "world": "sentiment", "instances": w.instances.len(), "baselines": {} });
        for baseline in [BaselineKind::Random, BaselineKind::Conditional] {
            let data = exact_rankings(&w, baseline);
            let orders: Vec<&[usize]> = data.iter().map(|(_, r)| r.order()).collect();
            out["baselines"][baseline.to_string()] = json!({
                "orders": orders,
                "reports": reports(&w, &data, &format!("exact-{baseline}")),
            });
        }
        out
    }

    /// Largest absolute difference between numbers at matching places, or
    /// `None` if the documents differ in shape or in any non-number.
    pub fn max_numeric_diff(a: &Value, b: &Value) -> Option<f64> {
        match (a, b) {
            (Value::Number(x), Value::Number(y)) => Some((x.as_f64()? - y.as_f64()?).abs()),
            (Value::Array(x), Value::Array(y)) if x.len() == y.len() => x
                .iter()
                .zip(y)
                .try_fold(0.0f64, |acc, (p, q)| Some(acc.max(max_numeric_diff(p, q)?))),
            (Value::Object(x), Value::Object(y)) if x.len() == y.len() => x.iter().try_fold(0.0f64, |acc, (k, p)| {
                Some(acc.max(max_numeric_diff(p, y.get(k)?)?))
            }),
            _ => (a == b).then_some(0.0),
        }
    }
}
