mod common;

use std::sync::Arc;

use asymshap::engine::{exact_shapley, shapley_sampling, ExactSpec};
use asymshap::model::{LexiconModel, LookupModel};
use asymshap::worlds::{twin_bits, sentiment};
use asymshap::{
    BaselineKind, DonorSource, Instance, LabelDistribution, Model, SamplingConfig, TabularJointModel,
    Token, ValueFunctionSpec,
};
use common::*;
use proptest::prelude::*;

fn exact(world: &RandomWorld, baseline: BaselineKind) -> Vec<f64> {
    let spec = ExactSpec {
        model: world.model.as_ref(),
        target_label: world.label,
        baseline,
        include_baseline_expectation: false,
    };
    exact_shapley(&spec, &world.x, &world.joint).unwrap().attribution.phi
}

#[test]
fn exact_matches_permutation_enumeration() {
    for seed in 0..12 {
        let w = random_world(seed, 4, 2 + (seed % 2) as u32, 2 + (seed % 3) as usize);
        for baseline in [BaselineKind::Random, BaselineKind::Conditional] {
            let got = exact(&w, baseline);
            let oracle = permutation_shapley(w.model.as_ref(), &w.joint, &w.x, w.label, baseline);
            for (a, b) in got.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-10, "seed {seed} {baseline}: {got:?} vs {oracle:?}");
            }
        }
    }
}

#[test]
fn efficiency_holds_for_both_baselines() {
    for seed in 100..120 {
        let w = random_world(seed, 5, 2, 2);
        let fx = w.model.predict(&w.x).unwrap().prob(w.label);
        let ef: f64 = w
            .joint
            .support()
            .iter()
            .map(|(p, q)| q * w.model.predict(&Instance::new(p.clone(), PAD).unwrap()).unwrap().prob(w.label))
            .sum();
        for baseline in [BaselineKind::Random, BaselineKind::Conditional] {
            let total: f64 = exact(&w, baseline).iter().sum();
            assert!((total - (fx - ef)).abs() < 1e-10);
        }
    }
}

#[test]
fn symmetric_features_get_equal_credit() {
    // f depends on positions 0 and 1 only through their sum; the joint is
    // exchangeable in those positions.
    let t = Token;
    let marg = vec![(t(0), 0.5), (t(1), 0.5)];
    let joint = TabularJointModel::independent(&[marg.clone(), marg, vec![(t(5), 0.4), (t(6), 0.6)]], PAD).unwrap();
    // Tokens 5 and 6 weigh nothing, so position 2 is a dummy.
    let model = LexiconModel::new([(t(1), 0.7)].into(), -0.2);
    let x = Instance::new(vec![t(1), t(1), t(5)], PAD).unwrap();
    let spec = ExactSpec {
        model: &model,
        target_label: 1,
        baseline: BaselineKind::Random,
        include_baseline_expectation: false,
    };
    let phi = exact_shapley(&spec, &x, &joint).unwrap().attribution.phi;
    assert!((phi[0] - phi[1]).abs() < 1e-12);
    assert!(phi[2].abs() < 1e-12, "{phi:?}");
}

#[test]
fn dummy_feature_gets_zero() {
    let t = Token;
    let joint = TabularJointModel::independent(
        &[
            vec![(t(1), 0.3), (t(2), 0.7)],
            vec![(t(3), 0.6), (t(4), 0.4)],
            vec![(t(5), 0.5), (t(6), 0.5)],
        ],
        PAD,
    )
    .unwrap();
    // Tokens 5 and 6 carry no weight, so position 2 never matters.
    let model = LexiconModel::new([(t(1), 1.0), (t(2), -0.5), (t(3), 0.8), (t(4), -1.1)].into(), 0.1);
    for x in [[1, 3, 5], [2, 4, 6], [1, 4, 6]] {
        let x = Instance::new(x.iter().map(|&v| t(v)).collect(), PAD).unwrap();
        for baseline in [BaselineKind::Random, BaselineKind::Conditional] {
            let spec = ExactSpec {
                model: &model,
                target_label: 1,
                baseline,
                include_baseline_expectation: false,
            };
            let phi = exact_shapley(&spec, &x, &joint).unwrap().attribution.phi;
            assert!(phi[2].abs() < 1e-12, "{phi:?}");
        }
    }
}

#[test]
fn twin_bits_random_baseline_closed_form() {
    let w = twin_bits();
    for x in &w.instances {
        let spec = ExactSpec {
            model: w.model.as_ref(),
            target_label: 1,
            baseline: BaselineKind::Random,
            include_baseline_expectation: false,
        };
        let phi = exact_shapley(&spec, x, &w.joint).unwrap().attribution.phi;
        let v = |i: usize| if x.features()[i] == w.vocab.get("1").unwrap() { 1.0 } else { 0.0 };
        assert!((phi[0] - (v(0) - 0.5)).abs() < 1e-12);
        assert!((phi[1] - (v(1) - 0.5)).abs() < 1e-12);
    }
}

#[test]
fn twin_bits_conditional_on_support_and_off_support() {
    // On the support (x1 = x2) each feature gets (x1 + x2 - 1) / 2. Off the
    // support the conditional expectations are 2 x1 and 2 x2 and E f = 1,
    // which gives (1, -1) for (1, 0) and (-1, 1) for (0, 1).
    let w = twin_bits();
    let spec = ExactSpec {
        model: w.model.as_ref(),
        target_label: 1,
        baseline: BaselineKind::Conditional,
        include_baseline_expectation: false,
    };
    let cases = [
        (["0", "0"], [-0.5, -0.5]),
        (["1", "1"], [0.5, 0.5]),
        (["1", "0"], [1.0, -1.0]),
        (["0", "1"], [-1.0, 1.0]),
    ];
    for (names, expected) in cases {
        let x = w.instance(&names).unwrap();
        let phi = exact_shapley(&spec, &x, &w.joint).unwrap().attribution.phi;
        assert!((phi[0] - expected[0]).abs() < 1e-12, "{names:?}: {phi:?}");
        assert!((phi[1] - expected[1]).abs() < 1e-12, "{names:?}: {phi:?}");
    }
}

#[test]
fn baseline_expectation_term_does_not_change_attributions() {
    let w = random_world(7, 4, 2, 2);
    for baseline in [BaselineKind::Random, BaselineKind::Conditional] {
        let mut spec = ExactSpec {
            model: w.model.as_ref(),
            target_label: w.label,
            baseline,
            include_baseline_expectation: false,
        };
        let a = exact_shapley(&spec, &w.x, &w.joint).unwrap().attribution.phi;
        spec.include_baseline_expectation = true;
        let b = exact_shapley(&spec, &w.x, &w.joint).unwrap().attribution.phi;
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}

fn sampling_spec(w: &RandomWorld, baseline: BaselineKind) -> ValueFunctionSpec {
    let joint = Arc::new(w.joint.clone());
    let donors = match baseline {
        BaselineKind::Random => DonorSource::Random(joint),
        BaselineKind::Conditional => DonorSource::Conditional(joint),
    };
    ValueFunctionSpec::new(w.model.clone(), w.label, donors).unwrap()
}

#[test]
fn conditional_sampling_tracks_exact() {
    for seed in 200..203 {
        let w = random_world(seed, 4, 2, 2);
        let truth = exact(&w, BaselineKind::Conditional);
        let cfg = SamplingConfig {
            m: 6000,
            seed,
            ..Default::default()
        };
        let est = shapley_sampling(&sampling_spec(&w, BaselineKind::Conditional), &w.x, &cfg).unwrap();
        let se = est.stderr.unwrap();
        for i in 0..4 {
            let diff = (est.attribution.phi[i] - truth[i]).abs();
            assert!(diff <= 4.0 * se[i] + 1e-12, "seed {seed} feature {i}: {diff} vs se {}", se[i]);
        }
    }
}

#[test]
fn reruns_are_bit_identical_across_workers() {
    let w = random_world(11, 5, 2, 3);
    for baseline in [BaselineKind::Random, BaselineKind::Conditional] {
        let spec = sampling_spec(&w, baseline);
        let base = SamplingConfig {
            m: 300,
            seed: 5,
            reweighted: true,
            ..Default::default()
        };
        let a = shapley_sampling(&spec, &w.x, &base).unwrap();
        let b = shapley_sampling(&spec, &w.x, &base).unwrap();
        let c = shapley_sampling(
            &spec,
            &w.x,
            &SamplingConfig {
                workers: 4,
                batch_size: 7,
                ..base.clone()
            },
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }
}

#[test]
fn sentiment_random_baseline_exact_matches_permutations() {
    let w = sentiment();
    for x in w.instances.iter().step_by(7) {
        let spec = ExactSpec {
            model: w.model.as_ref(),
            target_label: 1,
            baseline: BaselineKind::Random,
            include_baseline_expectation: false,
        };
        let got = exact_shapley(&spec, x, &w.joint).unwrap().attribution.phi;
        let oracle = permutation_shapley(w.model.as_ref(), &w.joint, x, 1, BaselineKind::Random);
        for (a, b) in got.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn zero_mass_coalitions_are_skipped_and_counted() {
    // x1 = 1 and x2 = 0 each occur, but never together.
    let t = Token;
    let joint = TabularJointModel::new(
        vec![
            (vec![t(0), t(0), t(0)], 0.4),
            (vec![t(1), t(1), t(0)], 0.3),
            (vec![t(0), t(1), t(1)], 0.3),
        ],
        PAD,
    )
    .unwrap();
    let row = |p: f64| LabelDistribution::binary(p).unwrap();
    let model = LookupModel::new(
        [(vec![t(1), t(0), t(0)], row(0.9)), (vec![t(0), t(0), t(0)], row(0.2))].into(),
        row(0.5),
    )
    .unwrap();
    let x = Instance::new(vec![t(1), t(0), t(0)], PAD).unwrap();
    let spec = ExactSpec {
        model: &model,
        target_label: 1,
        baseline: BaselineKind::Conditional,
        include_baseline_expectation: false,
    };
    let out = exact_shapley(&spec, &x, &joint).unwrap();
    assert!(out.skipped_terms > 0);
    assert!(out.attribution.phi.iter().all(|v| v.is_finite()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_worlds_satisfy_efficiency_and_match_oracle(seed in 0u64..10_000, n in 2usize..5, labels in 2usize..4) {
        let w = random_world(seed, n, 2, labels);
        for baseline in [BaselineKind::Random, BaselineKind::Conditional] {
            let got = exact(&w, baseline);
            let oracle = permutation_shapley(w.model.as_ref(), &w.joint, &w.x, w.label, baseline);
            for (a, b) in got.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sampling_is_exact_for_full_agreement(seed in 0u64..1000) {
        // A constant model has zero marginal contributions everywhere.
        let w = random_world(seed, 3, 2, 2);
        let model: Arc<dyn Model> = Arc::new(asymshap::model::ConstantModel::new(LabelDistribution::uniform(2)));
        let spec = ValueFunctionSpec::new(model, 0, DonorSource::Random(Arc::new(w.joint.clone()))).unwrap();
        let est = shapley_sampling(&spec, &w.x, &SamplingConfig { m: 20, seed, ..Default::default() }).unwrap();
        prop_assert!(est.attribution.phi.iter().all(|&v| v == 0.0));
    }
}
