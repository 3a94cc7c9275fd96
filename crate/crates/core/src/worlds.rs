//! Small self-contained worlds (joint, classifier, instances) used by the
//! tests, the benches and the CLI's builtin models.

use std::collections::HashMap;
use std::sync::Arc;

use crate::distributions::TabularJointModel;
use crate::error::{Error, Result};
use crate::interaction::WorldModel;
use crate::model::{LexiconModel, LinearModel, LookupModel, Model};
use crate::types::{Instance, LabelDistribution, Token, Vocab};

pub const PAD_NAME: &str = "<pad>";

pub struct World {
    pub name: &'static str,
    pub vocab: Arc<Vocab>,
    pub joint: Arc<TabularJointModel>,
    pub model: Arc<dyn Model>,
    pub target_label: usize,
    /// Instances worth explaining, in a fixed order.
    pub instances: Vec<Instance>,
}

impl World {
    pub const NAMES: [&'static str; 4] = ["twin-bits", "sentiment", "planted", "flat-singletons"];

    pub fn by_name(name: &str) -> Result<World> {
        match name {
            "twin-bits" => Ok(twin_bits()),
            "sentiment" => Ok(sentiment()),
            "planted" => Ok(planted_decisive()),
            "flat-singletons" => Ok(flat_singletons()),
            other => Err(Error::Config(format!(
                "unknown builtin world {other:?} (known: {})",
                Self::NAMES.join(", ")
            ))),
        }
    }

    pub fn pad(&self) -> Token {
        self.joint.pad()
    }

    pub fn world_model(&self) -> WorldModel {
        WorldModel {
            joint: self.joint.clone(),
            model: self.model.clone(),
            target_label: self.target_label,
        }
    }

    pub fn instance(&self, names: &[&str]) -> Result<Instance> {
        let tokens = names
            .iter()
            .map(|n| {
                self.vocab
                    .get(n)
                    .ok_or_else(|| Error::Argument(format!("token {n:?} not in the {} world", self.name)))
            })
            .collect::<Result<_>>()?;
        Instance::new(tokens, self.pad())
    }
}

fn product_support(marginals: &[Vec<(Token, f64)>]) -> Vec<(Vec<Token>, f64)> {
    marginals.iter().fold(vec![(Vec::new(), 1.0)], |acc, m| {
        acc.into_iter()
            .flat_map(|(prefix, p)| {
                m.iter().map(move |&(t, q)| {
                    let mut x = prefix.clone();
                    x.push(t);
                    (x, p * q)
                })
            })
            .collect()
    })
}

/// `f(x1, x2) = x1 + x2` with `X1 = X2 ~ Bernoulli(1/2)` (perfectly
/// correlated). Shapley values are in raw score units, label 1.
pub fn twin_bits() -> World {
    let vocab = Arc::new(Vocab::new());
    let [zero, one, pad] = [vocab.intern("0"), vocab.intern("1"), vocab.intern(PAD_NAME)];
    let joint = TabularJointModel::new(vec![(vec![zero, zero], 0.5), (vec![one, one], 0.5)], pad)
        .expect("valid joint");
    let model = LinearModel::new(vec![1.0, 1.0], 0.0, [(zero, 0.0), (one, 1.0), (pad, 0.0)].into());
    let instances = [[zero, zero], [zero, one], [one, zero], [one, one]]
        .into_iter()
        .map(|f| Instance::new(f.to_vec(), pad).expect("non-empty"))
        .collect();
    World {
        name: "twin-bits",
        vocab,
        joint: Arc::new(joint),
        model: Arc::new(model),
        target_label: 1,
        instances,
    }
}

const SENTIMENT_SLOTS: [&[(&str, f64)]; 4] = [
    &[("the", 0.5), ("not", 0.25), ("very", 0.25)],
    &[("good", 0.4), ("bad", 0.4), ("fine", 0.2)],
    &[("movie", 0.6), ("plot", 0.4)],
    &[(".", 0.7), ("!", 0.3)],
];

/// Additive bag-of-tokens logit. Each slot's weights sit in their own
/// magnitude band, so attributions rarely tie. The pad token weighs a
/// little, which keeps padding and deletion distinguishable.
fn sentiment_logit(words: &[&str]) -> f64 {
    words
        .iter()
        .map(|w| match *w {
            "the" => 0.8,
            "not" => -2.5,
            "very" => 2.5,
            "good" => 4.0,
            "bad" => -4.0,
            "fine" => 2.0,
            "movie" => 0.9,
            "plot" => -1.35,
            "!" => 0.25,
            PAD_NAME => -0.1,
            _ => 0.0,
        })
        .sum::<f64>()
        + 0.1
}

fn subsequences<T: Copy>(xs: &[T]) -> Vec<Vec<T>> {
    (0..1u32 << xs.len())
        .map(|mask| {
            xs.iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &t)| t)
                .collect()
        })
        .collect()
}

/// Four-slot review world (`modifier polarity topic punctuation`) with a
/// lookup classifier covering every padded or shortened variant of the
/// joint's support. Label 1 is positive.
pub fn sentiment() -> World {
    let vocab = Arc::new(Vocab::new());
    let pad = vocab.intern(PAD_NAME);
    let marginals: Vec<Vec<(Token, f64)>> = SENTIMENT_SLOTS
        .iter()
        .map(|slot| slot.iter().map(|&(w, p)| (vocab.intern(w), p)).collect())
        .collect();
    let (very, bang) = (vocab.intern("very"), vocab.intern("!"));
    let mut support = product_support(&marginals);
    for (x, p) in &mut support {
        if x[0] == very && x[3] == bang {
            *p *= 2.0;
        }
    }
    let total: f64 = support.iter().map(|(_, p)| p).sum();
    for (_, p) in &mut support {
        *p /= total;
    }

    let mut keys: Vec<Vec<Token>> = Vec::new();
    let with_pad: Vec<Vec<(Token, f64)>> = marginals
        .iter()
        .map(|m| m.iter().copied().chain([(pad, 0.0)]).collect())
        .collect();
    keys.extend(product_support(&with_pad).into_iter().map(|(x, _)| x));
    for (x, _) in &support {
        keys.extend(subsequences(x).into_iter().filter(|s| !s.is_empty() && s.len() < x.len()));
    }
    let name = |t: &Token| vocab.name(*t).expect("interned");
    let table: HashMap<Vec<Token>, LabelDistribution> = keys
        .into_iter()
        .map(|k| {
            let names: Vec<_> = k.iter().map(name).collect();
            let words: Vec<&str> = names.iter().map(|s| s.as_ref()).collect();
            let p = 1.0 / (1.0 + (-sentiment_logit(&words)).exp());
            (k, LabelDistribution::binary(p).expect("probability"))
        })
        .collect();
    let model = LookupModel::new(table, LabelDistribution::uniform(2)).expect("consistent rows");
    let instances = support
        .iter()
        .map(|(x, _)| Instance::new(x.clone(), pad).expect("non-empty"))
        .collect();
    World {
        name: "sentiment",
        vocab,
        joint: Arc::new(TabularJointModel::new(support, pad).expect("normalized joint")),
        model: Arc::new(model),
        target_label: 1,
        instances,
    }
}

/// Position 0 decides the label (`P` strongly positive, `N` strongly
/// negative), position 1 nudges it (`A`/`B`), positions 2 and 3 carry
/// neutral tokens. Donors keep the decisive value `P` 90% of the time, so a
/// random-baseline replacement rarely moves the prediction at position 0.
pub fn planted_decisive() -> World {
    let vocab = Arc::new(Vocab::new());
    let t = |s: &str| vocab.intern(s);
    let pad = t(PAD_NAME);
    let marginals = vec![
        vec![(t("P"), 0.9), (t("N"), 0.1)],
        vec![(t("A"), 0.5), (t("B"), 0.5)],
        vec![(t("u"), 1.0)],
        vec![(t("v"), 1.0)],
    ];
    let joint = TabularJointModel::independent(&marginals, pad).expect("valid marginals");
    let model = LexiconModel::new([(t("P"), 1.5), (t("N"), -1.5), (t("A"), 0.4), (t("B"), -0.4)].into(), 0.0);
    let x = Instance::new(vec![t("P"), t("A"), t("u"), t("v")], pad).expect("non-empty");
    World {
        name: "planted",
        vocab,
        joint: Arc::new(joint),
        model: Arc::new(model),
        target_label: 1,
        instances: vec![x],
    }
}

/// Three binary positions and a lookup classifier that is uniform on every
/// instance containing a pad, so every singleton entropy is exactly 1.
pub fn flat_singletons() -> World {
    let vocab = Arc::new(Vocab::new());
    let (a, b, pad) = (vocab.intern("a"), vocab.intern("b"), vocab.intern(PAD_NAME));
    let marginals = vec![
        vec![(a, 0.3), (b, 0.7)],
        vec![(a, 0.6), (b, 0.4)],
        vec![(a, 0.5), (b, 0.5)],
    ];
    let support = product_support(&marginals);
    let rows = [0.91, 0.13, 0.55, 0.72, 0.08, 0.37, 0.64, 0.29];
    let table = support
        .iter()
        .zip(rows)
        .map(|((x, _), p)| (x.clone(), LabelDistribution::binary(p).expect("probability")))
        .collect();
    let model = LookupModel::new(table, LabelDistribution::uniform(2)).expect("consistent rows");
    let instances = support
        .iter()
        .map(|(x, _)| Instance::new(x.clone(), pad).expect("non-empty"))
        .collect();
    World {
        name: "flat-singletons",
        vocab,
        joint: Arc::new(TabularJointModel::new(support, pad).expect("normalized joint")),
        model: Arc::new(model),
        target_label: 1,
        instances,
    }
}
