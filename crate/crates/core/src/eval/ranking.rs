use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::AttributionVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankingRule {
    #[default]
    SignedDescending,
    AbsoluteDescending,
}

/// Features ordered most influential first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    order: Vec<usize>,
    /// Indexed by feature, not by rank.
    scores: Vec<f64>,
}

fn check_permutation(order: &[usize]) -> Result<()> {
    let mut seen = vec![false; order.len()];
    for &i in order {
        if i >= order.len() || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Argument(format!("{order:?} is not a permutation")));
        }
    }
    Ok(())
}

impl Ranking {
    pub fn new(order: Vec<usize>, scores: Vec<f64>) -> Result<Self> {
        check_permutation(&order)?;
        if scores.len() != order.len() {
            return Err(Error::Argument(format!(
                "{} scores for {} features",
                scores.len(),
                order.len()
            )));
        }
        Ok(Self { order, scores })
    }

    /// A ranking given only its order; scores count down from `n`.
    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        check_permutation(&order)?;
        let n = order.len();
        let mut scores = vec![0.0; n];
        for (pos, &i) in order.iter().enumerate() {
            scores[i] = (n - pos) as f64;
        }
        Ok(Self { order, scores })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Rank position of every feature (0 = most influential).
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (p, &i) in self.order.iter().enumerate() {
            pos[i] = p;
        }
        pos
    }

    pub fn top(&self, count: usize) -> &[usize] {
        &self.order[..count.min(self.order.len())]
    }
}

pub fn rank_scores(scores: &[f64], rule: RankingRule) -> Result<Ranking> {
    if let Some(v) = scores.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("cannot rank non-finite score {v}")));
    }
    let key = |v: f64| match rule {
        RankingRule::SignedDescending => v,
        RankingRule::AbsoluteDescending => v.abs(),
    };
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // sort_by is stable, so equal scores keep ascending index order.
    order.sort_by(|&a, &b| key(scores[b]).total_cmp(&key(scores[a])));
    Ok(Ranking {
        order,
        scores: scores.to_vec(),
    })
}

pub fn rank_features(attr: &AttributionVector, rule: RankingRule) -> Ranking {
    rank_scores(&attr.phi, rule).expect("attribution vectors are finite")
}

/// Number of features in the top `k` percent: `ceil(k * n / 100)`, at least 1.
pub fn top_count(n: usize, k: f64) -> usize {
    let exact = k * n as f64 / 100.0;
    // Guard against representation noise pushing an integer just above itself.
    let c = (exact - 1e-9).ceil().max(1.0) as usize;
    c.min(n)
}

pub(crate) fn check_k(k: f64) -> Result<()> {
    if k > 0.0 && k <= 100.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("k = {k} outside (0, 100]")))
    }
}

/// Spearman rank correlation between two strict rankings of the same features.
pub fn spearman(r1: &Ranking, r2: &Ranking) -> Result<f64> {
    if r1.len() != r2.len() {
        return Err(Error::Argument(format!(
            "rankings of different lengths {} and {}",
            r1.len(),
            r2.len()
        )));
    }
    let n = r1.len();
    if n < 2 {
        return Err(Error::Argument("spearman needs at least 2 features".into()));
    }
    let (p1, p2) = (r1.positions(), r2.positions());
    let d2: f64 = p1
        .iter()
        .zip(&p2)
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    let nf = n as f64;
    Ok(1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0)))
}

/// Fraction of shared features among the two top-`k` percent sets.
pub fn overlap_rate(r1: &Ranking, r2: &Ranking, k: f64) -> Result<f64> {
    if r1.len() != r2.len() {
        return Err(Error::Argument(format!(
            "rankings of different lengths {} and {}",
            r1.len(),
            r2.len()
        )));
    }
    check_k(k)?;
    if r1.is_empty() {
        return Err(Error::Argument("empty rankings".into()));
    }
    let c = top_count(r1.len(), k);
    let a = r1.top(c);
    let shared = r2.top(c).iter().filter(|i| a.contains(i)).count();
    Ok(shared as f64 / c as f64)
}
