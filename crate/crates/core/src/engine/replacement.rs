use crate::error::{Error, Result};
use crate::model::Model;
use crate::types::{normalized_entropy, Instance, Token};

/// Picks the candidate replacement for position `i` whose singleton
/// prediction has the highest normalized entropy. Ties go to the earliest
/// candidate.
pub fn select_uninformative_replacement(
    model: &dyn Model,
    x: &Instance,
    i: usize,
    candidates: &[Token],
) -> Result<Token> {
    if candidates.is_empty() {
        return Err(Error::Config("empty replacement candidate set".into()));
    }
    let probes: Vec<Instance> = candidates
        .iter()
        .map(|&v| Instance::padded(x.len(), x.pad()).with_value(i, v))
        .collect::<Result<_>>()?;
    let preds = model.predict_batch(&probes)?;
    let mut best = (candidates[0], f64::NEG_INFINITY);
    for (&v, d) in candidates.iter().zip(&preds) {
        let h = normalized_entropy(d)?;
        if h > best.1 {
            best = (v, h);
        }
    }
    Ok(best.0)
}
