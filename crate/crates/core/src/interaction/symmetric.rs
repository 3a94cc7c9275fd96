use super::WorldModel;
use crate::engine::{ExactSpec, ExactValues};
use crate::error::{Error, Result};
use crate::types::{full_mask, BaselineKind, Coalition, Instance};

pub const MAX_SYMMETRIC_FEATURES: usize = 15;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Shapley interaction index of the coalition `t`, with `v` the exact value
/// function of `baseline` over the world's joint.
pub fn symmetric_interaction(
    world: &WorldModel,
    x: &Instance,
    t: &Coalition,
    baseline: BaselineKind,
) -> Result<f64> {
    let n = x.len();
    if n > MAX_SYMMETRIC_FEATURES {
        return Err(Error::Capacity {
            n,
            limit: MAX_SYMMETRIC_FEATURES,
        });
    }
    if t.n() != n {
        return Err(Error::Argument("coalition length differs from the instance".into()));
    }
    if t.size() < 2 {
        return Err(Error::Argument(format!(
            "interaction index needs |T| >= 2, got {}",
            t.size()
        )));
    }
    let spec = ExactSpec {
        model: world.model.as_ref(),
        target_label: world.target_label,
        baseline,
        include_baseline_expectation: false,
    };
    let values = ExactValues::compute(&spec, x, &world.joint)?;
    let v = |mask: u64| {
        values.get(mask).ok_or_else(|| {
            Error::Conditioning(format!(
                "coalition {:?} has zero probability",
                Coalition::from_mask(mask, n).indices()
            ))
        })
    };

    let tm = t.mask();
    let rest = full_mask(n) & !tm;
    let m = n - t.size();
    let mut total = 0.0;
    // Enumerate S <= rest by the standard submask walk (descending).
    let mut s = rest;
    loop {
        let mut delta = 0.0;
        let mut l = tm;
        loop {
            let sign = if (t.size() - l.count_ones() as usize).is_multiple_of(2) { 1.0 } else { -1.0 };
            delta += sign * v(s | l)?;
            if l == 0 {
                break;
            }
            l = (l - 1) & tm;
        }
        let k = s.count_ones() as usize;
        total += delta / ((m + 1) as f64 * binomial(m, k));
        if s == 0 {
            break;
        }
        s = (s - 1) & rest;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::TabularJointModel;
    use crate::model::{ConstantModel, LexiconModel, Model};
    use crate::types::{LabelDistribution, Token};
    use std::sync::Arc;

    const PAD: Token = Token(0);

    #[test]
    fn constant_model_has_no_interaction() {
        let joint = TabularJointModel::independent(
            &[
                vec![(Token(1), 0.5), (Token(2), 0.5)],
                vec![(Token(1), 0.3), (Token(2), 0.7)],
                vec![(Token(1), 0.6), (Token(2), 0.4)],
            ],
            PAD,
        )
        .unwrap();
        let model: Arc<dyn Model> =
            Arc::new(ConstantModel::new(LabelDistribution::binary(0.3).unwrap()));
        let world = WorldModel::new(Arc::new(joint), model, 1).unwrap();
        let x = Instance::new(vec![Token(1), Token(2), Token(1)], PAD).unwrap();
        for idx in [vec![0, 1], vec![1, 2], vec![0, 1, 2]] {
            let t = Coalition::new(idx, 3).unwrap();
            for b in [BaselineKind::Random, BaselineKind::Conditional] {
                assert!(symmetric_interaction(&world, &x, &t, b).unwrap().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singleton_rejected() {
        let joint = TabularJointModel::independent(&[vec![(Token(1), 1.0)], vec![(Token(1), 1.0)]], PAD)
            .unwrap();
        let model: Arc<dyn Model> = Arc::new(LexiconModel::new(Default::default(), 0.0));
        let world = WorldModel::new(Arc::new(joint), model, 1).unwrap();
        let x = Instance::new(vec![Token(1), Token(1)], PAD).unwrap();
        let t = Coalition::new([0], 2).unwrap();
        assert!(matches!(
            symmetric_interaction(&world, &x, &t, BaselineKind::Random),
            Err(Error::Argument(_))
        ));
    }
}
