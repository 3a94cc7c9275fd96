//! Domain types: tokens, instances, coalitions and label distributions.
//!
//! Feature values are opaque [`Token`]s. The engine never interprets them;
//! a [`Vocab`] maps them to and from strings at the I/O boundary.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a [`LabelDistribution`].
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

/// An opaque discrete feature value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(pub u32);

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Default)]
struct VocabInner {
    ids: HashMap<Arc<str>, Token>,
    names: Vec<Arc<str>>,
}

/// Thread-safe string interner.
#[derive(Debug, Default)]
pub struct Vocab {
    inner: RwLock<VocabInner>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the token for `name`, allocating a new id on first sight.
    pub fn intern(&self, name: &str) -> Token {
        if let Some(t) = self.get(name) {
            return t;
        }
        let mut inner = self.inner.write().expect("vocab lock poisoned");
        if let Some(t) = inner.ids.get(name) {
            return *t;
        }
        let token = Token(inner.names.len() as u32);
        let name: Arc<str> = Arc::from(name);
        inner.names.push(name.clone());
        inner.ids.insert(name, token);
        token
    }

    pub fn get(&self, name: &str) -> Option<Token> {
        self.inner
            .read()
            .expect("vocab lock poisoned")
            .ids
            .get(name)
            .copied()
    }

    pub fn name(&self, token: Token) -> Option<Arc<str>> {
        self.inner
            .read()
            .expect("vocab lock poisoned")
            .names
            .get(token.0 as usize)
            .cloned()
    }

    /// Name of `token`, or its numeric display form when unknown.
    pub fn display(&self, token: Token) -> String {
        self.name(token)
            .map(|s| s.to_string())
            .unwrap_or_else(|| token.to_string())
    }

    pub fn intern_all<S: AsRef<str>>(&self, names: &[S]) -> Vec<Token> {
        names.iter().map(|s| self.intern(s.as_ref())).collect()
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("vocab lock poisoned").names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An ordered sequence of feature values plus the designated pad value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instance {
    features: Vec<Token>,
    pad: Token,
}

impl Instance {
    pub fn new(features: Vec<Token>, pad: Token) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Argument("instance must have at least one feature".into()));
        }
        Ok(Self { features, pad })
    }

    /// Builds an instance without the non-empty check. Deletion-mode
    /// perturbation is the only producer of empty instances.
    pub(crate) fn from_raw(features: Vec<Token>, pad: Token) -> Self {
        Self { features, pad }
    }

    /// All-pad instance of length `n`.
    pub fn padded(n: usize, pad: Token) -> Self {
        Self {
            features: vec![pad; n],
            pad,
        }
    }

    pub fn features(&self) -> &[Token] {
        &self.features
    }

    pub fn pad(&self) -> Token {
        self.pad
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<Token> {
        self.features.get(i).copied()
    }

    /// Copy of `self` holding `value` at position `i`.
    pub fn with_value(&self, i: usize, value: Token) -> Result<Self> {
        if i >= self.len() {
            return Err(Error::Argument(format!(
                "index {i} out of range for length {}",
                self.len()
            )));
        }
        let mut out = self.clone();
        out.features[i] = value;
        Ok(out)
    }

    pub fn into_features(self) -> Vec<Token> {
        self.features
    }
}

/// Instance with only some positions observed; the rest are missing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialInstance {
    observed: BTreeMap<usize, Token>,
    n: usize,
}

impl PartialInstance {
    pub fn new(observed: BTreeMap<usize, Token>, n: usize) -> Result<Self> {
        if let Some((&i, _)) = observed.iter().next_back() {
            if i >= n {
                return Err(Error::Argument(format!(
                    "observed index {i} out of range for length {n}"
                )));
            }
        }
        Ok(Self { observed, n })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            observed: BTreeMap::new(),
            n,
        }
    }

    /// The values of `x` at the positions in `coalition`.
    pub fn from_coalition(x: &Instance, coalition: &Coalition) -> Self {
        Self {
            observed: coalition
                .iter()
                .map(|i| (i, x.features[i]))
                .collect(),
            n: x.len(),
        }
    }

    pub fn from_mask(x: &Instance, mask: u64) -> Self {
        Self {
            observed: (0..x.len())
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| (i, x.features[i]))
                .collect(),
            n: x.len(),
        }
    }

    pub fn observed(&self) -> &BTreeMap<usize, Token> {
        &self.observed
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn observed_count(&self) -> usize {
        self.observed.len()
    }

    pub fn get(&self, i: usize) -> Option<Token> {
        self.observed.get(&i).copied()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.observed.len() == self.n
    }

    /// True when `features` agrees with every observed position.
    pub fn is_consistent(&self, features: &[Token]) -> bool {
        features.len() == self.n && self.observed.iter().all(|(&i, &v)| features[i] == v)
    }

    /// Union of two partial observations; fails if they disagree anywhere.
    pub fn merge(&self, other: &PartialInstance) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::Composition {
                expected: self.n,
                actual: other.n,
            });
        }
        let mut observed = self.observed.clone();
        for (&i, &v) in &other.observed {
            match observed.insert(i, v) {
                Some(prev) if prev != v => {
                    return Err(Error::Argument(format!(
                        "conflicting values at position {i}: {prev} vs {v}"
                    )))
                }
                _ => {}
            }
        }
        Ok(Self {
            observed,
            n: self.n,
        })
    }

    /// Fills unobserved positions with `fill`.
    pub fn fill(&self, fill: Token) -> Instance {
        let features = (0..self.n)
            .map(|i| self.observed.get(&i).copied().unwrap_or(fill))
            .collect();
        Instance::from_raw(features, fill)
    }
}

/// A subset of feature indices over a sequence of length `n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coalition {
    indices: Vec<usize>,
    n: usize,
}

impl Coalition {
    pub fn new(indices: impl IntoIterator<Item = usize>, n: usize) -> Result<Self> {
        let mut indices: Vec<usize> = indices.into_iter().collect();
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Argument("duplicate index in coalition".into()));
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::Argument(format!(
                    "coalition index {last} out of range for length {n}"
                )));
            }
        }
        Ok(Self { indices, n })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            indices: Vec::new(),
            n,
        }
    }

    pub fn full(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
            n,
        }
    }

    /// Coalition from a bitmask; bit `i` set means index `i` is included.
    pub fn from_mask(mask: u64, n: usize) -> Self {
        Self {
            indices: (0..n).filter(|i| mask >> i & 1 == 1).collect(),
            n,
        }
    }

    pub fn mask(&self) -> u64 {
        self.indices.iter().fold(0, |m, &i| m | 1 << i)
    }

    pub fn complement(&self) -> Self {
        let mask = self.mask();
        Self::from_mask(!mask & full_mask(self.n), self.n)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Bitmask with the low `n` bits set.
pub fn full_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Keeps `x`'s values at indices in `coalition` and `donor`'s values elsewhere.
pub fn compose(x: &Instance, coalition: &Coalition, donor: &Instance) -> Result<Instance> {
    if x.len() != donor.len() {
        return Err(Error::Composition {
            expected: x.len(),
            actual: donor.len(),
        });
    }
    if coalition.n() != x.len() {
        return Err(Error::Composition {
            expected: x.len(),
            actual: coalition.n(),
        });
    }
    Ok(compose_mask(x, coalition.mask(), donor))
}

/// Unchecked mask form of [`compose`]; callers guarantee equal lengths.
pub(crate) fn compose_mask(x: &Instance, mask: u64, donor: &Instance) -> Instance {
    let features = x
        .features
        .iter()
        .zip(&donor.features)
        .enumerate()
        .map(|(i, (&a, &b))| if mask >> i & 1 == 1 { a } else { b })
        .collect();
    Instance::from_raw(features, x.pad)
}

/// Probability vector over the label space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelDistribution {
    probs: Vec<f64>,
}

impl LabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("empty label distribution".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(Error::Domain(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(labels: usize) -> Self {
        Self {
            probs: vec![1.0 / labels as f64; labels],
        }
    }

    pub fn one_hot(labels: usize, hot: usize) -> Self {
        let mut probs = vec![0.0; labels];
        probs[hot] = 1.0;
        Self { probs }
    }

    /// Two-label distribution `(1 - p, p)`.
    pub fn binary(p: f64) -> Result<Self> {
        Self::new(vec![1.0 - p, p])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn label_count(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, label: usize) -> f64 {
        self.probs[label]
    }

    /// Index of the most probable label; the first one on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (j, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = j;
            }
        }
        best
    }
}

/// Entropy in bits divided by `log2(L)`; `0 log 0` is taken as 0.
pub fn normalized_entropy(d: &LabelDistribution) -> Result<f64> {
    let labels = d.label_count();
    if labels < 2 {
        return Err(Error::Domain(
            "normalized entropy needs at least two labels".into(),
        ));
    }
    let h: f64 = d
        .probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum();
    Ok((h / (labels as f64).log2()).clamp(0.0, 1.0))
}

/// How the replacement values for missing features are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Random,
    Conditional,
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineKind::Random => f.write_str("random"),
            BaselineKind::Conditional => f.write_str("conditional"),
        }
    }
}

/// What produced an [`AttributionVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionMeta {
    pub baseline: BaselineKind,
    /// Sample count; `None` for exact enumeration.
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub reweighted: bool,
}

/// Per-feature Shapley estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub phi: Vec<f64>,
    pub meta: AttributionMeta,
}

impl AttributionVector {
    pub fn new(phi: Vec<f64>, meta: AttributionMeta) -> Result<Self> {
        if let Some(v) = phi.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite attribution {v}")));
        }
        Ok(Self { phi, meta })
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }
}

/// What the entropy weight conditions on when reweighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyInput {
    /// The replacement value alone, pads everywhere else.
    #[default]
    Singleton,
    /// The full composed instance that carries the replacement.
    Composed,
}

/// Settings for Monte Carlo Shapley sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub m: usize,
    pub seed: u64,
    pub reweighted: bool,
    #[serde(default)]
    pub include_baseline_expectation: bool,
    #[serde(default)]
    pub entropy_input: EntropyInput,
    /// Worker threads for model evaluation; never affects results.
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Instances per model call.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_workers() -> usize {
    1
}

fn default_batch() -> usize {
    256
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            m: 1000,
            seed: 0,
            reweighted: false,
            include_baseline_expectation: false,
            entropy_input: EntropyInput::Singleton,
            workers: 1,
            batch_size: default_batch(),
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("sample count m must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inst(v: &[u32]) -> Instance {
        Instance::new(v.iter().map(|&t| Token(t)).collect(), Token(99)).unwrap()
    }

    #[test]
    fn compose_examples() {
        let x = inst(&[1, 2, 3]);
        let donor = inst(&[7, 8, 9]);
        assert_eq!(compose(&x, &Coalition::full(3), &donor).unwrap(), x);
        assert_eq!(compose(&x, &Coalition::empty(3), &donor).unwrap(), donor);
        let s = Coalition::new([1], 3).unwrap();
        assert_eq!(compose(&x, &s, &donor).unwrap(), inst(&[7, 2, 9]));
    }

    #[test]
    fn compose_length_mismatch() {
        let err = compose(&inst(&[1, 2]), &Coalition::empty(2), &inst(&[1, 2, 3])).unwrap_err();
        assert!(matches!(err, Error::Composition { .. }));
    }

    #[test]
    fn entropy_examples() {
        let h = |p: &[f64]| normalized_entropy(&LabelDistribution::new(p.to_vec()).unwrap()).unwrap();
        assert_eq!(h(&[0.5, 0.5]), 1.0);
        assert_eq!(h(&[1.0, 0.0]), 0.0);
        assert_eq!(h(&[0.5, 0.5, 0.0, 0.0]), 0.5);
        assert!(matches!(
            normalized_entropy(&LabelDistribution::new(vec![1.0]).unwrap()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn distribution_validation() {
        assert!(LabelDistribution::new(vec![0.6, 0.6]).is_err());
        assert!(LabelDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(LabelDistribution::new(vec![0.3, 0.7 + 5e-7]).is_ok());
    }

    #[test]
    fn coalition_rejects_bad_indices() {
        assert!(Coalition::new([0, 0], 2).is_err());
        assert!(Coalition::new([2], 2).is_err());
        let c = Coalition::new([2, 0], 4).unwrap();
        assert_eq!(c.indices(), &[0, 2]);
        assert_eq!(c.complement().indices(), &[1, 3]);
    }

    #[test]
    fn vocab_interns_once() {
        let v = Vocab::new();
        let a = v.intern("plot");
        assert_eq!(v.intern("plot"), a);
        assert_ne!(v.intern("fun"), a);
        assert_eq!(&*v.name(a).unwrap(), "plot");
    }

    fn dist_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 2..8).prop_filter_map("zero mass", |w| {
            let s: f64 = w.iter().sum();
            (s > 1e-9).then(|| w.iter().map(|v| v / s).collect())
        })
    }

    proptest! {
        #[test]
        fn compose_swaps_with_complement(
            (x, d, mask) in (1usize..10).prop_flat_map(|n| (
                prop::collection::vec(0u32..5, n),
                prop::collection::vec(0u32..5, n),
                0u64..(1u64 << n),
            ))
        ) {
            let n = x.len();
            let x = inst(&x);
            let d = inst(&d);
            let s = Coalition::from_mask(mask, n);
            let a = compose(&x, &s, &d).unwrap();
            let b = compose(&d, &s.complement(), &x).unwrap();
            prop_assert_eq!(a.features(), b.features());
        }

        #[test]
        fn entropy_bounded_and_permutation_invariant(p in dist_strategy()) {
            let d = LabelDistribution::new(p.clone()).unwrap();
            let h = normalized_entropy(&d).unwrap();
            prop_assert!((0.0..=1.0).contains(&h));
            let mut rev = p.clone();
            rev.reverse();
            let hr = normalized_entropy(&LabelDistribution::new(rev).unwrap()).unwrap();
            prop_assert!((h - hr).abs() < 1e-12);
            let hu = normalized_entropy(&LabelDistribution::uniform(p.len())).unwrap();
            prop_assert!(h <= hu + 1e-12);
        }
    }
}
