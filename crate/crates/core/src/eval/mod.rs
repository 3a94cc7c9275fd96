//! Faithfulness metrics and ranking agreement.
//!
//! `f` is always the model's probability of the class it predicted on the
//! unperturbed instance. The top `k` percent of `n` features is
//! `ceil(k * n / 100)` features, at least one.

mod metrics;
mod ranking;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::types::Instance;

pub use metrics::{
    comprehensiveness, comprehensiveness_from_terms, instance_terms, log_odds, log_odds_from_terms,
    perturb, perturbed_indices, sufficiency, sufficiency_from_terms, InstanceTerms, LogBase,
    PerturbMode, Region,
};
pub use ranking::{overlap_rate, rank_features, rank_scores, spearman, top_count, Ranking, RankingRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k_grid: Vec<f64>,
    pub perturb_mode: PerturbMode,
    pub ranking_rule: RankingRule,
    pub log_base: LogBase,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k_grid: vec![10.0, 20.0, 30.0, 40.0, 50.0],
            perturb_mode: PerturbMode::Pad,
            ranking_rule: RankingRule::SignedDescending,
            log_base: LogBase::E,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_grid.is_empty() {
            return Err(Error::Config("k_grid is empty".into()));
        }
        for &k in &self.k_grid {
            if !(k > 0.0 && k <= 100.0) {
                return Err(Error::Config(format!("k_grid entry {k} outside (0, 100]")));
            }
        }
        Ok(())
    }
}

/// A mean with its spread over repeated runs (`None` for a single run).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: Option<f64>,
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.std {
            Some(s) => write!(f, "{:.4}±{:.4}", self.mean, s),
            None => write!(f, "{:.4}", self.mean),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub k: f64,
    pub lor: Stat,
    pub sf: Stat,
    pub cm: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    /// Instances per run.
    pub n: usize,
    pub runs: usize,
    pub perturb_mode: PerturbMode,
    pub log_base: LogBase,
    pub rows: Vec<EvalRow>,
}

/// One row of the plot-ready long format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRecord {
    pub method: String,
    pub k: f64,
    pub metric: String,
    pub value: f64,
    pub seed: Option<u64>,
}

/// LOR, SF and CM over `data` for every `k` in the grid.
pub fn evaluate(
    model: &dyn Model,
    data: &[(Instance, Ranking)],
    cfg: &EvalConfig,
    method: &str,
    workers: usize,
) -> Result<EvalReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("no instances to evaluate".into()));
    }
    let mut rows = Vec::with_capacity(cfg.k_grid.len());
    for &k in &cfg.k_grid {
        let terms = instance_terms(model, data, k, cfg.perturb_mode, workers)?;
        let single = |mean| Stat { mean, std: None };
        rows.push(EvalRow {
            k,
            lor: single(log_odds_from_terms(&terms, cfg.log_base)?),
            sf: single(sufficiency_from_terms(&terms)?),
            cm: single(comprehensiveness_from_terms(&terms)?),
        });
    }
    Ok(EvalReport {
        method: method.to_string(),
        n: data.len(),
        runs: 1,
        perturb_mode: cfg.perturb_mode,
        log_base: cfg.log_base,
        rows,
    })
}

fn mean_std(values: &[f64]) -> Stat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    // Deviations from the first value, so identical runs give exactly zero.
    let shift = values[0];
    let (s, s2) = values
        .iter()
        .fold((0.0, 0.0), |(s, s2), v| (s + (v - shift), s2 + (v - shift).powi(2)));
    let std = (values.len() > 1).then(|| ((s2 - s * s / n) / n).max(0.0).sqrt());
    Stat { mean, std }
}

/// Mean and (population) standard deviation across runs with different seeds.
pub fn aggregate_runs(runs: &[EvalReport]) -> Result<EvalReport> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Argument("no runs to aggregate".into()))?;
    for r in runs {
        if r.rows.len() != first.rows.len()
            || r.rows.iter().zip(&first.rows).any(|(a, b)| a.k != b.k)
        {
            return Err(Error::Argument("runs were evaluated on different k grids".into()));
        }
    }
    let rows = (0..first.rows.len())
        .map(|j| {
            let pick = |f: fn(&EvalRow) -> f64| -> Vec<f64> { runs.iter().map(|r| f(&r.rows[j])).collect() };
            EvalRow {
                k: first.rows[j].k,
                lor: mean_std(&pick(|r| r.lor.mean)),
                sf: mean_std(&pick(|r| r.sf.mean)),
                cm: mean_std(&pick(|r| r.cm.mean)),
            }
        })
        .collect();
    Ok(EvalReport {
        method: first.method.clone(),
        n: first.n,
        runs: runs.len(),
        perturb_mode: first.perturb_mode,
        log_base: first.log_base,
        rows,
    })
}

impl EvalReport {
    /// One row per `k`; std columns are empty for single runs.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "method", "k", "n", "runs", "lor_mean", "lor_std", "sf_mean", "sf_std", "cm_mean", "cm_std",
        ])?;
        let opt = |s: Option<f64>| s.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                self.method.clone(),
                r.k.to_string(),
                self.n.to_string(),
                self.runs.to_string(),
                r.lor.mean.to_string(),
                opt(r.lor.std),
                r.sf.mean.to_string(),
                opt(r.sf.std),
                r.cm.mean.to_string(),
                opt(r.cm.std),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn long_records(&self, seed: Option<u64>) -> Vec<LongRecord> {
        let mut out = Vec::with_capacity(3 * self.rows.len());
        for r in &self.rows {
            for (metric, s) in [("lor", r.lor), ("sf", r.sf), ("cm", r.cm)] {
                out.push(LongRecord {
                    method: self.method.clone(),
                    k: r.k,
                    metric: metric.into(),
                    value: s.mean,
                    seed,
                });
            }
        }
        out
    }
}

pub fn long_csv(records: &[LongRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
