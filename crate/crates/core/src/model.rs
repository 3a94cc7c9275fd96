//! The black-box model contract and a few built-in models.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Instance, LabelDistribution, Token};

/// Whether a model may be called from several threads at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConcurrencyClass {
    ConcurrentSafe,
    Serialized,
}

/// A deterministic black-box classifier.
///
/// `predict_batch` must agree element-wise with single predictions, and
/// identical inputs must produce identical outputs.
pub trait Model: Send + Sync {
    fn label_count(&self) -> usize;

    fn predict_batch(&self, batch: &[Instance]) -> Result<Vec<LabelDistribution>>;

    /// `f_y` for every instance. For probabilistic models this is the
    /// probability of `label`; regression-style models may override it.
    fn score_batch(&self, batch: &[Instance], label: usize) -> Result<Vec<f64>> {
        if label >= self.label_count() {
            return Err(Error::Argument(format!(
                "label {label} out of range for {} labels",
                self.label_count()
            )));
        }
        Ok(self
            .predict_batch(batch)?
            .iter()
            .map(|d| d.prob(label))
            .collect())
    }

    fn concurrency_class(&self) -> ConcurrencyClass {
        ConcurrencyClass::ConcurrentSafe
    }

    fn predict(&self, x: &Instance) -> Result<LabelDistribution> {
        self.predict_batch(std::slice::from_ref(x))?
            .pop()
            .ok_or_else(|| Error::Evaluation("model returned an empty batch".into()))
    }
}

impl<M: Model + ?Sized> Model for Arc<M> {
    fn label_count(&self) -> usize {
        (**self).label_count()
    }
    fn predict_batch(&self, batch: &[Instance]) -> Result<Vec<LabelDistribution>> {
        (**self).predict_batch(batch)
    }
    fn score_batch(&self, batch: &[Instance], label: usize) -> Result<Vec<f64>> {
        (**self).score_batch(batch, label)
    }
    fn concurrency_class(&self) -> ConcurrencyClass {
        (**self).concurrency_class()
    }
}

/// Model output on the instance holding `v` at `i` and pad everywhere else.
pub fn predict_singleton(
    model: &dyn Model,
    x: &Instance,
    i: usize,
    v: Token,
) -> Result<LabelDistribution> {
    if i >= x.len() {
        return Err(Error::Argument(format!(
            "index {i} out of range for length {}",
            x.len()
        )));
    }
    let probe = Instance::padded(x.len(), x.pad()).with_value(i, v)?;
    model.predict(&probe)
}

/// Batched, optionally parallel driver around a [`Model`].
///
/// Results always come back in input order, so the worker count never
/// changes what callers observe.
pub struct Evaluator<'a> {
    model: &'a dyn Model,
    batch_size: usize,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Evaluator<'a> {
    pub fn new(model: &'a dyn Model, workers: usize, batch_size: usize) -> Result<Self> {
        let batch_size = batch_size.max(1);
        let pool = if workers > 1 && model.concurrency_class() == ConcurrencyClass::ConcurrentSafe
        {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            model,
            batch_size,
            pool,
        })
    }

    pub fn model(&self) -> &dyn Model {
        self.model
    }

    pub fn scores(&self, instances: &[Instance], label: usize) -> Result<Vec<f64>> {
        self.run(instances, |chunk| self.model.score_batch(chunk, label))
    }

    pub fn predictions(&self, instances: &[Instance]) -> Result<Vec<LabelDistribution>> {
        self.run(instances, |chunk| self.model.predict_batch(chunk))
    }

    fn run<T: Send>(
        &self,
        instances: &[Instance],
        call: impl Fn(&[Instance]) -> Result<Vec<T>> + Sync,
    ) -> Result<Vec<T>> {
        let checked = |chunk: &[Instance]| -> Result<Vec<T>> {
            let out = call(chunk)?;
            if out.len() != chunk.len() {
                return Err(Error::Evaluation(format!(
                    "model returned {} outputs for {} inputs",
                    out.len(),
                    chunk.len()
                )));
            }
            Ok(out)
        };
        let chunks: Vec<Vec<T>> = match &self.pool {
            Some(pool) => pool.install(|| {
                instances
                    .par_chunks(self.batch_size)
                    .map(checked)
                    .collect::<Result<Vec<_>>>()
            })?,
            None => instances
                .chunks(self.batch_size)
                .map(checked)
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(chunks.into_iter().flatten().collect())
    }
}

/// Returns the same distribution for every input.
#[derive(Debug, Clone)]
pub struct ConstantModel {
    dist: LabelDistribution,
}

impl ConstantModel {
    pub fn new(dist: LabelDistribution) -> Self {
        Self { dist }
    }
}

impl Model for ConstantModel {
    fn label_count(&self) -> usize {
        self.dist.label_count()
    }

    fn predict_batch(&self, batch: &[Instance]) -> Result<Vec<LabelDistribution>> {
        Ok(vec![self.dist.clone(); batch.len()])
    }
}

/// Exact lookup table from feature sequences to distributions, with a
/// fallback for sequences not in the table.
#[derive(Debug, Clone)]
pub struct LookupModel {
    table: HashMap<Vec<Token>, LabelDistribution>,
    fallback: LabelDistribution,
}

impl LookupModel {
    pub fn new(
        table: HashMap<Vec<Token>, LabelDistribution>,
        fallback: LabelDistribution,
    ) -> Result<Self> {
        let labels = fallback.label_count();
        if table.values().any(|d| d.label_count() != labels) {
            return Err(Error::Argument(
                "lookup rows disagree on the label count".into(),
            ));
        }
        Ok(Self { table, fallback })
    }

    pub fn table(&self) -> &HashMap<Vec<Token>, LabelDistribution> {
        &self.table
    }
}

impl Model for LookupModel {
    fn label_count(&self) -> usize {
        self.fallback.label_count()
    }

    fn predict_batch(&self, batch: &[Instance]) -> Result<Vec<LabelDistribution>> {
        Ok(batch
            .iter()
            .map(|x| {
                self.table
                    .get(x.features())
                    .unwrap_or(&self.fallback)
                    .clone()
            })
            .collect())
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Linear scorer `bias + sum_i w_i * value(x_i)`.
///
/// `score_batch` returns the raw linear score for every label, so Shapley
/// values come out in the units of the linear function. `predict_batch`
/// squashes the score through a sigmoid into a two-label distribution.
#[derive(Debug, Clone)]
pub struct LinearModel {
    weights: Vec<f64>,
    bias: f64,
    values: HashMap<Token, f64>,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, bias: f64, values: HashMap<Token, f64>) -> Self {
        Self {
            weights,
            bias,
            values,
        }
    }

    pub fn score(&self, x: &Instance) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::Evaluation(format!(
                "linear model expects {} features, got {}",
                self.weights.len(),
                x.len()
            )));
        }
        x.features()
            .iter()
            .zip(&self.weights)
            .try_fold(self.bias, |acc, (t, w)| {
                self.values
                    .get(t)
                    .map(|v| acc + w * v)
                    .ok_or_else(|| Error::Evaluation(format!("no numeric value for token {t}")))
            })
    }
}

impl Model for LinearModel {
    fn label_count(&self) -> usize {
        2
    }

    fn predict_batch(&self, batch: &[Instance]) -> Result<Vec<LabelDistribution>> {
        batch
            .iter()
            .map(|x| {
                let p = sigmoid(self.score(x)?);
                LabelDistribution::binary(p)
            })
            .collect()
    }

    fn score_batch(&self, batch: &[Instance], _label: usize) -> Result<Vec<f64>> {
        batch.iter().map(|x| self.score(x)).collect()
    }
}

/// Two-label bag-of-tokens model: `p(label 1) = sigmoid(bias + sum w(token))`.
/// Unknown tokens weigh zero.
#[derive(Debug, Clone)]
pub struct LexiconModel {
    weights: HashMap<Token, f64>,
    bias: f64,
}

impl LexiconModel {
    pub fn new(weights: HashMap<Token, f64>, bias: f64) -> Self {
        Self { weights, bias }
    }

    pub fn logit(&self, x: &Instance) -> f64 {
        self.bias
            + x.features()
                .iter()
                .map(|t| self.weights.get(t).copied().unwrap_or(0.0))
                .sum::<f64>()
    }
}

impl Model for LexiconModel {
    fn label_count(&self) -> usize {
        2
    }

    fn predict_batch(&self, batch: &[Instance]) -> Result<Vec<LabelDistribution>> {
        batch
            .iter()
            .map(|x| LabelDistribution::binary(sigmoid(self.logit(x))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: u32) -> Token {
        Token(v)
    }

    fn twin_linear() -> LinearModel {
        LinearModel::new(vec![1.0, 1.0], 0.0, [(t(0), 0.0), (t(1), 1.0)].into())
    }

    #[test]
    fn singleton_of_constant_model() {
        let c = LabelDistribution::new(vec![0.2, 0.8]).unwrap();
        let m = ConstantModel::new(c.clone());
        let x = Instance::new(vec![t(1), t(2), t(3)], t(0)).unwrap();
        for i in 0..3 {
            assert_eq!(predict_singleton(&m, &x, i, t(7)).unwrap(), c);
        }
    }

    #[test]
    fn singleton_reads_lookup_row() {
        let row = LabelDistribution::new(vec![0.1, 0.9]).unwrap();
        let table = [(vec![t(0), t(5), t(0)], row.clone())].into();
        let m = LookupModel::new(table, LabelDistribution::uniform(2)).unwrap();
        let x = Instance::new(vec![t(1), t(2), t(3)], t(0)).unwrap();
        assert_eq!(predict_singleton(&m, &x, 1, t(5)).unwrap(), row);
        assert_eq!(
            predict_singleton(&m, &x, 0, t(5)).unwrap(),
            LabelDistribution::uniform(2)
        );
    }

    #[test]
    fn singleton_on_linear_model_is_f_of_1_0() {
        let m = twin_linear();
        let x = Instance::new(vec![t(1), t(1)], t(0)).unwrap();
        let got = predict_singleton(&m, &x, 0, t(1)).unwrap();
        let direct = Instance::new(vec![t(1), t(0)], t(0)).unwrap();
        assert_eq!(got, m.predict(&direct).unwrap());
        assert_eq!(m.score(&direct).unwrap(), 1.0);
    }

    #[test]
    fn singleton_index_out_of_range() {
        let m = twin_linear();
        let x = Instance::new(vec![t(1), t(1)], t(0)).unwrap();
        assert!(predict_singleton(&m, &x, 2, t(1)).is_err());
    }

    #[test]
    fn batch_matches_single_predictions() {
        let lex = LexiconModel::new([(t(1), 1.5), (t(2), -0.7)].into(), 0.1);
        let batch: Vec<Instance> = (0..4)
            .map(|k| Instance::new(vec![t(k % 3), t((k + 1) % 3)], t(0)).unwrap())
            .collect();
        let together = lex.predict_batch(&batch).unwrap();
        for (x, d) in batch.iter().zip(&together) {
            assert_eq!(&lex.predict(x).unwrap(), d);
        }
        let ev = Evaluator::new(&lex, 3, 1).unwrap();
        assert_eq!(ev.predictions(&batch).unwrap(), together);
    }

    #[test]
    fn score_rejects_bad_label() {
        let m = ConstantModel::new(LabelDistribution::uniform(2));
        let x = Instance::new(vec![t(1)], t(0)).unwrap();
        assert!(m.score_batch(&[x], 2).is_err());
    }
}
