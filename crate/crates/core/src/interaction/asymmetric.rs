//! Directed interaction `phi(T2 -> T1)`.
//!
//! First term: the average over `T2 <= S <= N \ T1` of
//! `I(y; x_T1 | x_S) - I(y; x_T1 | x_{S \ T2})`, i.e. how much `T2` changes
//! what `T1` says about `y`. Second term: the average over ordered pairs of
//! disjoint non-empty `S1, S2 <= N \ T2` of
//! `I(y; x_T2 | x_{S1 u S2}) - I(y; x_T2 | x_S1)`, the typical interaction
//! `T2` has with anything. The index is the first minus the second.

use super::{Posterior, WorldModel};
use crate::error::{Error, Result};
use crate::types::{full_mask, Coalition, Instance};

pub const MAX_ASYMMETRIC_FEATURES: usize = 12;

/// Bits of `mask`, lowest first.
fn bits(mask: u64) -> Vec<u64> {
    (0..64).filter(|b| mask >> b & 1 == 1).map(|b| 1u64 << b).collect()
}

/// Every `S` with `T2 <= S <= N \ T1`, as bitmasks in increasing order of
/// the free part.
pub fn first_sum_coalitions(n: usize, t1: u64, t2: u64) -> impl Iterator<Item = u64> {
    let free = bits(full_mask(n) & !t1 & !t2);
    (0..1u64 << free.len()).map(move |sel| {
        free.iter()
            .enumerate()
            .filter(|(k, _)| sel >> k & 1 == 1)
            .fold(t2, |acc, (_, b)| acc | b)
    })
}

/// Every ordered pair of disjoint non-empty `(S1, S2)` inside `N \ T2`.
pub fn second_sum_pairs(n: usize, t2: u64) -> impl Iterator<Item = (u64, u64)> {
    let free = bits(full_mask(n) & !t2);
    let total = 3u64.pow(free.len() as u32);
    (0..total).filter_map(move |mut code| {
        let (mut s1, mut s2) = (0u64, 0u64);
        for b in &free {
            match code % 3 {
                1 => s1 |= b,
                2 => s2 |= b,
                _ => {}
            }
            code /= 3;
        }
        (s1 != 0 && s2 != 0).then_some((s1, s2))
    })
}

/// `2^(n - |T1| - |T2|)`, the size of the first enumeration.
pub fn first_sum_count(n: usize, t1: usize, t2: usize) -> u64 {
    1u64 << (n - t1 - t2)
}

/// `3^m - 2^(m+1) + 1` with `m = n - |T2|`, the size of the second enumeration.
pub fn second_sum_count(n: usize, t2: usize) -> u64 {
    let m = (n - t2) as u32;
    3u64.pow(m) + 1 - 2u64.pow(m + 1)
}

fn annotate(e: Error, what: &str, mask: u64, n: usize) -> Error {
    match e {
        Error::Conditioning(msg) => Error::Conditioning(format!(
            "{msg} (while evaluating {what} at S = {:?})",
            Coalition::from_mask(mask, n).indices()
        )),
        other => other,
    }
}

pub(crate) fn first_term(post: &mut Posterior<'_>, t1: u64, t2: u64) -> Result<f64> {
    let n = post.instance().len();
    let mut sum = 0.0;
    let mut count = 0u64;
    for s in first_sum_coalitions(n, t1, t2) {
        let with = post.pmi(t1, s).map_err(|e| annotate(e, "first term", s, n))?;
        let without = post
            .pmi(t1, s & !t2)
            .map_err(|e| annotate(e, "first term", s & !t2, n))?;
        sum += with - without;
        count += 1;
    }
    Ok(sum / count as f64)
}

/// Depends on `T2` only, so callers building many edges can reuse it.
pub(crate) fn second_term(post: &mut Posterior<'_>, t2: u64) -> Result<f64> {
    let n = post.instance().len();
    let pairs = second_sum_count(n, t2.count_ones() as usize);
    if pairs == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (s1, s2) in second_sum_pairs(n, t2) {
        let with = post
            .pmi(t2, s1 | s2)
            .map_err(|e| annotate(e, "second term", s1 | s2, n))?;
        let without = post.pmi(t2, s1).map_err(|e| annotate(e, "second term", s1, n))?;
        sum += with - without;
    }
    Ok(sum / pairs as f64)
}

pub(crate) fn check_pair(n: usize, t1: u64, t2: u64) -> Result<()> {
    if n > MAX_ASYMMETRIC_FEATURES {
        return Err(Error::Capacity {
            n,
            limit: MAX_ASYMMETRIC_FEATURES,
        });
    }
    if t1 == 0 || t2 == 0 {
        return Err(Error::Argument("interaction subsets must be non-empty".into()));
    }
    if (t1 | t2) & !full_mask(n) != 0 {
        return Err(Error::Argument("subset index out of range".into()));
    }
    if t1 & t2 != 0 {
        return Err(Error::Argument(format!(
            "subsets overlap: {:?} and {:?}",
            Coalition::from_mask(t1, n).indices(),
            Coalition::from_mask(t2, n).indices()
        )));
    }
    Ok(())
}

/// `phi(T2 -> T1)` for instance `x` in `world`.
pub fn asymmetric_interaction(
    world: &WorldModel,
    x: &Instance,
    t1: &Coalition,
    t2: &Coalition,
) -> Result<f64> {
    let n = x.len();
    if t1.n() != n || t2.n() != n {
        return Err(Error::Argument("coalition length differs from the instance".into()));
    }
    check_pair(n, t1.mask(), t2.mask())?;
    let mut post = Posterior::new(world, x)?;
    Ok(first_term(&mut post, t1.mask(), t2.mask())? - second_term(&mut post, t2.mask())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::TabularJointModel;
    use crate::model::{LookupModel, Model};
    use crate::types::{LabelDistribution, Token};
    use std::sync::Arc;

    const PAD: Token = Token(9);

    #[test]
    fn enumeration_sizes_for_four_features() {
        assert_eq!(first_sum_coalitions(4, 0b0001, 0b0010).count(), 4);
        assert_eq!(second_sum_pairs(4, 0b0010).count(), 12);
        assert_eq!(first_sum_count(4, 1, 1), 4);
        assert_eq!(second_sum_count(4, 1), 12);
    }

    #[test]
    fn first_sum_subsets_contain_t2_and_avoid_t1() {
        for s in first_sum_coalitions(5, 0b00101, 0b01000) {
            assert_eq!(s & 0b01000, 0b01000);
            assert_eq!(s & 0b00101, 0);
        }
    }

    #[test]
    fn second_term_vacuous_for_small_complement() {
        assert_eq!(second_sum_count(2, 1), 0);
        assert_eq!(second_sum_pairs(2, 0b10).count(), 0);
    }

    #[test]
    fn two_feature_reduces_to_single_difference() {
        // n = 2, T1 = {0}, T2 = {1}: phi = pmi({0}|{1}) - pmi({0}|{}), worked by hand.
        let joint = TabularJointModel::new(
            vec![
                (vec![Token(0), Token(0)], 0.4),
                (vec![Token(0), Token(1)], 0.1),
                (vec![Token(1), Token(0)], 0.2),
                (vec![Token(1), Token(1)], 0.3),
            ],
            PAD,
        )
        .unwrap();
        let row = |p: f64| LabelDistribution::binary(p).unwrap();
        let model: Arc<dyn Model> = Arc::new(
            LookupModel::new(
                [
                    (vec![Token(0), Token(0)], row(0.2)),
                    (vec![Token(0), Token(1)], row(0.5)),
                    (vec![Token(1), Token(0)], row(0.6)),
                    (vec![Token(1), Token(1)], row(0.9)),
                ]
                .into(),
                LabelDistribution::uniform(2),
            )
            .unwrap(),
        );
        let world = WorldModel::new(Arc::new(joint), model, 1).unwrap();
        let x = Instance::new(vec![Token(1), Token(1)], PAD).unwrap();
        // p(y | x1=1, x2=1) = 0.9
        // p(y | x2=1) = (0.1*0.5 + 0.3*0.9) / 0.4 = 0.8
        // p(y | x1=1) = (0.2*0.6 + 0.3*0.9) / 0.5 = 0.78
        // p(y) = 0.4*0.2 + 0.1*0.5 + 0.2*0.6 + 0.3*0.9 = 0.52
        let expected = ((0.9f64).ln() - (0.8f64).ln()) - ((0.78f64).ln() - (0.52f64).ln());
        let got = asymmetric_interaction(
            &world,
            &x,
            &Coalition::new([0], 2).unwrap(),
            &Coalition::new([1], 2).unwrap(),
        )
        .unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn overlapping_subsets_rejected() {
        let joint = TabularJointModel::new(vec![(vec![Token(0), Token(0)], 1.0)], PAD).unwrap();
        let model: Arc<dyn Model> = Arc::new(
            LookupModel::new(Default::default(), LabelDistribution::uniform(2)).unwrap(),
        );
        let world = WorldModel::new(Arc::new(joint), model, 0).unwrap();
        let x = Instance::new(vec![Token(0), Token(0)], PAD).unwrap();
        let c = Coalition::new([0], 2).unwrap();
        assert!(matches!(
            asymmetric_interaction(&world, &x, &c, &c),
            Err(Error::Argument(_))
        ));
    }
}
