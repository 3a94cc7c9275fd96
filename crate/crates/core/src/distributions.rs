//! Baseline donors: empirical datasets, exact tabular joints, and the
//! conditional-provider abstraction.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::{Rng, RngCore};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{Evaluator, Model};
use crate::types::{Instance, LabelDistribution, PartialInstance, Token, Vocab};

/// Tolerance on the total mass of a [`TabularJointModel`].
pub const JOINT_TOLERANCE: f64 = 1e-9;

/// Source of whole donor instances for the random baseline.
pub trait DonorPool: Send + Sync {
    /// Draws one donor, right-padded with `pad` or truncated to length `n`.
    fn draw_donor(&self, n: usize, pad: Token, rng: &mut dyn RngCore) -> Result<Instance>;
}

/// Samples completions of a partial observation.
pub trait ConditionalProvider: Send + Sync {
    /// One completion agreeing with `observed` at every observed position.
    fn sample_completion(
        &self,
        observed: &PartialInstance,
        rng: &mut dyn RngCore,
    ) -> Result<Instance>;

    /// Whether completions follow an exact conditional distribution.
    fn supports_exact_conditionals(&self) -> bool {
        false
    }
}

fn fit_length(features: &[Token], n: usize, pad: Token) -> Instance {
    let mut out: Vec<Token> = features.iter().copied().take(n).collect();
    out.resize(n, pad);
    Instance::from_raw(out, pad)
}

/// Instances with optional gold labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    instances: Vec<Instance>,
    labels: Vec<Option<usize>>,
}

impl Dataset {
    pub fn new(instances: Vec<Instance>, labels: Vec<Option<usize>>) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::Sampling("dataset is empty".into()));
        }
        if labels.len() != instances.len() {
            return Err(Error::Argument(format!(
                "{} labels for {} instances",
                labels.len(),
                instances.len()
            )));
        }
        if instances.iter().any(Instance::is_empty) {
            return Err(Error::Argument("dataset contains an empty instance".into()));
        }
        Ok(Self { instances, labels })
    }

    pub fn unlabeled(instances: Vec<Instance>) -> Result<Self> {
        let labels = vec![None; instances.len()];
        Self::new(instances, labels)
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Loads `{"tokens": [...], "label": int}` lines.
    pub fn from_jsonl(reader: impl Read, vocab: &Vocab, pad: Token) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            tokens: Vec<String>,
            #[serde(default)]
            label: Option<usize>,
        }
        let mut instances = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            let x = Instance::new(vocab.intern_all(&row.tokens), pad)
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            instances.push(x);
            labels.push(row.label);
        }
        Self::new(instances, labels)
    }

    /// Loads a CSV with a header row: one feature per column, the last
    /// column is the label (may be empty).
    pub fn from_csv(reader: impl Read, vocab: &Vocab, pad: Token) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let mut instances = Vec::new();
        let mut labels = Vec::new();
        for (row_no, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::Parse(format!(
                    "row {}: need at least one feature and a label",
                    row_no + 1
                )));
            }
            let (feats, label) = (rec.iter().take(rec.len() - 1), &rec[rec.len() - 1]);
            let label = match label.trim() {
                "" => None,
                s => Some(s.parse::<usize>().map_err(|e| {
                    Error::Parse(format!("row {}: bad label {s:?}: {e}", row_no + 1))
                })?),
            };
            let tokens = feats.map(|f| vocab.intern(f)).collect();
            instances.push(Instance::new(tokens, pad)?);
            labels.push(label);
        }
        Self::new(instances, labels)
    }

    /// Dispatches on the file extension (`.jsonl`/`.json` or `.csv`).
    pub fn load(path: &Path, vocab: &Vocab, pad: Token) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::from_csv(file, vocab, pad),
            _ => Self::from_jsonl(file, vocab, pad),
        }
    }
}

/// Uniformly selects a dataset instance, fitted to length `n`.
pub fn draw_random_donor(
    data: &Dataset,
    n: usize,
    pad: Token,
    rng: &mut dyn RngCore,
) -> Result<Instance> {
    if data.instances.is_empty() {
        return Err(Error::Sampling("dataset is empty".into()));
    }
    let k = rng.gen_range(0..data.instances.len());
    Ok(fit_length(data.instances[k].features(), n, pad))
}

impl DonorPool for Dataset {
    fn draw_donor(&self, n: usize, pad: Token, rng: &mut dyn RngCore) -> Result<Instance> {
        draw_random_donor(self, n, pad, rng)
    }
}

/// Finite joint distribution over feature sequences of one length.
#[derive(Debug, Clone)]
pub struct TabularJointModel {
    support: Vec<(Vec<Token>, f64)>,
    n: usize,
    pad: Token,
}

impl TabularJointModel {
    pub fn new(support: Vec<(Vec<Token>, f64)>, pad: Token) -> Result<Self> {
        let Some(n) = support.first().map(|(x, _)| x.len()) else {
            return Err(Error::Argument("joint support is empty".into()));
        };
        if n == 0 {
            return Err(Error::Argument("joint instances must be non-empty".into()));
        }
        if support.iter().any(|(x, _)| x.len() != n) {
            return Err(Error::Argument(
                "joint support points differ in length".into(),
            ));
        }
        if let Some((_, p)) = support.iter().find(|(_, p)| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Argument(format!("invalid probability {p}")));
        }
        let total: f64 = support.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > JOINT_TOLERANCE {
            return Err(Error::Argument(format!(
                "joint probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { support, n, pad })
    }

    /// Product of independent per-position marginals.
    pub fn independent(marginals: &[Vec<(Token, f64)>], pad: Token) -> Result<Self> {
        let mut support: Vec<(Vec<Token>, f64)> = vec![(Vec::new(), 1.0)];
        for marginal in marginals {
            support = support
                .into_iter()
                .flat_map(|(prefix, p)| {
                    marginal.iter().map(move |&(t, q)| {
                        let mut x = prefix.clone();
                        x.push(t);
                        (x, p * q)
                    })
                })
                .collect();
        }
        Self::new(support, pad)
    }

    /// Empirical joint from counts over a dataset of equal-length instances.
    pub fn fit(data: &Dataset) -> Result<Self> {
        let n = data.instances[0].len();
        let pad = data.instances[0].pad();
        let mut counts: BTreeMap<Vec<Token>, usize> = BTreeMap::new();
        for x in &data.instances {
            if x.len() != n {
                return Err(Error::Argument(
                    "fitting a joint needs equal-length instances".into(),
                ));
            }
            *counts.entry(x.features().to_vec()).or_default() += 1;
        }
        let total = data.instances.len() as f64;
        let support = counts
            .into_iter()
            .map(|(x, c)| (x, c as f64 / total))
            .collect();
        Self::new(support, pad)
    }

    /// Reads rows of `feature..., probability` (header row required).
    pub fn from_csv(reader: impl Read, vocab: &Vocab, pad: Token) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let mut support = Vec::new();
        for (row_no, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::Parse(format!(
                    "row {}: need features and a probability",
                    row_no + 1
                )));
            }
            let p: f64 = rec[rec.len() - 1].trim().parse().map_err(|e| {
                Error::Parse(format!("row {}: bad probability: {e}", row_no + 1))
            })?;
            let x = rec.iter().take(rec.len() - 1).map(|f| vocab.intern(f)).collect();
            support.push((x, p));
        }
        Self::new(support, pad)
    }

    pub fn load(path: &Path, vocab: &Vocab, pad: Token) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?, vocab, pad)
    }

    pub fn support(&self) -> &[(Vec<Token>, f64)] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn pad(&self) -> Token {
        self.pad
    }

    /// Marginal probability of the observed values.
    pub fn probability(&self, observed: &PartialInstance) -> f64 {
        self.support
            .iter()
            .filter(|(x, _)| observed.is_consistent(x))
            .map(|(_, p)| p)
            .sum()
    }

    fn check_len(&self, observed: &PartialInstance) -> Result<()> {
        if observed.len() != self.n {
            return Err(Error::Composition {
                expected: self.n,
                actual: observed.len(),
            });
        }
        Ok(())
    }

    /// Support points consistent with `observed`, weighted by their exact
    /// conditional probability given `observed`.
    pub fn completions(&self, observed: &PartialInstance) -> Result<Vec<(&[Token], f64)>> {
        self.check_len(observed)?;
        let consistent: Vec<(&[Token], f64)> = self
            .support
            .iter()
            .filter(|(x, p)| *p > 0.0 && observed.is_consistent(x))
            .map(|(x, p)| (x.as_slice(), *p))
            .collect();
        let mass: f64 = consistent.iter().map(|(_, p)| p).sum();
        if mass <= 0.0 {
            return Err(zero_mass(observed));
        }
        Ok(consistent.into_iter().map(|(x, p)| (x, p / mass)).collect())
    }

    /// Weighted draw of one support point, fitted to length `n`.
    fn draw_weighted(&self, rng: &mut dyn RngCore) -> &[Token] {
        let u: f64 = rng.gen::<f64>();
        let mut acc = 0.0;
        let mut last = &self.support[0].0;
        for (x, p) in &self.support {
            if *p <= 0.0 {
                continue;
            }
            acc += p;
            last = x;
            if u < acc {
                return x;
            }
        }
        last
    }
}

fn zero_mass(observed: &PartialInstance) -> Error {
    let desc: Vec<String> = observed
        .observed()
        .iter()
        .map(|(i, t)| format!("{i}={t}"))
        .collect();
    Error::Conditioning(format!(
        "observation {{{}}} has zero probability",
        desc.join(", ")
    ))
}

/// Draws the unobserved positions from the exact conditional of the joint.
pub fn sample_conditional(
    joint: &TabularJointModel,
    observed: &PartialInstance,
    rng: &mut dyn RngCore,
) -> Result<Instance> {
    let completions = joint.completions(observed)?;
    if observed.is_fully_observed() {
        return Ok(observed.fill(joint.pad));
    }
    let u: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    for (x, p) in &completions {
        acc += p;
        if u < acc {
            return Ok(Instance::from_raw(x.to_vec(), joint.pad));
        }
    }
    let (x, _) = completions.last().expect("non-empty after mass check");
    Ok(Instance::from_raw(x.to_vec(), joint.pad))
}

/// `p(target | given)` under the joint.
pub fn conditional_probability(
    joint: &TabularJointModel,
    target: &PartialInstance,
    given: &PartialInstance,
) -> Result<f64> {
    joint.check_len(given)?;
    let both = target.merge(given)?;
    let p_given = joint.probability(given);
    if p_given <= 0.0 {
        return Err(zero_mass(given));
    }
    Ok(joint.probability(&both) / p_given)
}

/// Exact mixture of model outputs over the completions of `observed`.
pub fn marginal_label(
    joint: &TabularJointModel,
    model: &dyn Model,
    observed: &PartialInstance,
) -> Result<LabelDistribution> {
    let completions = joint.completions(observed)?;
    let batch: Vec<Instance> = completions
        .iter()
        .map(|(x, _)| Instance::from_raw(x.to_vec(), joint.pad))
        .collect();
    let preds = Evaluator::new(model, 1, batch.len().max(1))?.predictions(&batch)?;
    mix(&preds, completions.iter().map(|(_, w)| *w))
}

pub(crate) fn mix(
    preds: &[LabelDistribution],
    weights: impl Iterator<Item = f64>,
) -> Result<LabelDistribution> {
    let labels = preds.first().map(|d| d.label_count()).unwrap_or(0);
    let mut acc = vec![0.0; labels];
    for (d, w) in preds.iter().zip(weights) {
        for (a, p) in acc.iter_mut().zip(d.probs()) {
            *a += w * p;
        }
    }
    let total: f64 = acc.iter().sum();
    for a in &mut acc {
        *a = (*a / total).clamp(0.0, 1.0);
    }
    LabelDistribution::new(acc)
}

impl DonorPool for TabularJointModel {
    fn draw_donor(&self, n: usize, pad: Token, rng: &mut dyn RngCore) -> Result<Instance> {
        Ok(fit_length(self.draw_weighted(rng), n, pad))
    }
}

impl ConditionalProvider for TabularJointModel {
    fn sample_completion(
        &self,
        observed: &PartialInstance,
        rng: &mut dyn RngCore,
    ) -> Result<Instance> {
        sample_conditional(self, observed, rng)
    }

    fn supports_exact_conditionals(&self) -> bool {
        true
    }
}

/// Keeps per-position token frequencies; handy for candidate sets.
pub fn position_values(joint: &TabularJointModel, i: usize) -> Vec<Token> {
    let mut seen: HashSet<Token> = HashSet::new();
    let mut out = Vec::new();
    for (x, p) in &joint.support {
        if *p > 0.0 && seen.insert(x[i]) {
            out.push(x[i]);
        }
    }
    out
}
