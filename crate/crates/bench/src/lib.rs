//! Fixtures shared by the benchmarks.

use std::collections::HashMap;
use std::sync::Arc;

use asymshap::interaction::WorldModel;
use asymshap::model::LexiconModel;
use asymshap::{Instance, TabularJointModel, Token};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PAD: Token = Token(0);

/// An `n`-position world with `values` independent uniform tokens per
/// position and a lexicon model with seeded random weights.
pub struct Fixture {
    pub world: WorldModel,
    pub x: Instance,
}

pub fn fixture(n: usize, values: u32, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let token = |i: usize, v: u32| Token(1 + i as u32 * values + v);
    let marginals: Vec<Vec<(Token, f64)>> = (0..n)
        .map(|i| (0..values).map(|v| (token(i, v), 1.0 / values as f64)).collect())
        .collect();
    let joint = TabularJointModel::independent(&marginals, PAD).expect("valid joint");
    let weights: HashMap<Token, f64> = (0..n)
        .flat_map(|i| (0..values).map(move |v| token(i, v)))
        .map(|t| (t, rng.gen_range(-2.0..2.0)))
        .collect();
    let x = Instance::new((0..n).map(|i| token(i, rng.gen_range(0..values))).collect(), PAD).expect("non-empty");
    let world = WorldModel::new(Arc::new(joint), Arc::new(LexiconModel::new(weights, 0.1)), 1).expect("label 1 exists");
    Fixture { world, x }
}
