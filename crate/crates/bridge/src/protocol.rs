//! Request and response bodies, plus the checks applied to every response.

use std::collections::BTreeMap;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{protocol, Result};

/// Row sums further than this from 1 are rejected.
pub const SUM_TOLERANCE: f64 = 1e-4;
/// Row sums further than this from 1 (but within [`SUM_TOLERANCE`]) are
/// renormalized with a warning.
pub const RENORMALIZE_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub instances: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalRequest {
    /// Position to token. Serialized in ascending position order with the
    /// positions as decimal strings.
    #[serde(serialize_with = "observed_in_index_order", deserialize_with = "observed_from_strings")]
    pub observed: BTreeMap<usize, String>,
    pub n: usize,
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalResponse {
    pub completions: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaResponse {
    pub label_count: usize,
    pub pad_token: String,
}

fn observed_in_index_order<S: Serializer>(observed: &BTreeMap<usize, String>, s: S) -> Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(observed.len()))?;
    for (i, token) in observed {
        map.serialize_entry(&i.to_string(), token)?;
    }
    map.end()
}

fn observed_from_strings<'de, D: serde::Deserializer<'de>>(d: D) -> Result<BTreeMap<usize, String>, D::Error> {
    let raw = BTreeMap::<String, String>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| {
            k.parse::<usize>()
                .map(|i| (i, v))
                .map_err(|_| serde::de::Error::custom(format!("observed index {k:?} is not a position")))
        })
        .collect()
}

/// Parses `body` as `T`, reporting a protocol error with an excerpt.
pub fn parse<T: serde::de::DeserializeOwned>(body: &str, what: &str) -> Result<T> {
    serde_json::from_str(body).map_err(|e| protocol(format!("malformed {what} response: {e}"), body))
}

/// Checks shape and probabilities of a `/predict` response and renormalizes
/// rows that are slightly off.
pub fn validate_probs(resp: PredictResponse, expected_rows: usize, label_count: usize, body: &str) -> Result<Vec<Vec<f64>>> {
    if resp.probs.len() != expected_rows {
        return Err(protocol(
            format!("expected {expected_rows} rows, got {}", resp.probs.len()),
            body,
        ));
    }
    resp.probs
        .into_iter()
        .enumerate()
        .map(|(r, mut row)| {
            if row.len() != label_count {
                return Err(protocol(
                    format!("row {r} has {} probabilities, expected {label_count}", row.len()),
                    body,
                ));
            }
            if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0) {
                return Err(protocol(format!("row {r} has invalid probability {p}"), body));
            }
            let sum: f64 = row.iter().sum();
            let off = (sum - 1.0).abs();
            if off > SUM_TOLERANCE {
                return Err(protocol(format!("row {r} sums to {sum}"), body));
            }
            if off > RENORMALIZE_THRESHOLD {
                log::warn!("renormalizing row {r}: probabilities sum to {sum}");
                row.iter_mut().for_each(|p| *p /= sum);
            }
            Ok(row)
        })
        .collect()
}

/// Checks that there are `count` completions of length `n`, each agreeing
/// with `observed`.
pub fn validate_completions(
    resp: ConditionalResponse,
    observed: &BTreeMap<usize, String>,
    n: usize,
    count: usize,
    body: &str,
) -> Result<Vec<Vec<String>>> {
    if resp.completions.len() != count {
        return Err(protocol(
            format!("expected {count} completions, got {}", resp.completions.len()),
            body,
        ));
    }
    for (c, completion) in resp.completions.iter().enumerate() {
        if completion.len() != n {
            return Err(protocol(
                format!("completion {c} has length {}, expected {n}", completion.len()),
                body,
            ));
        }
        if let Some((i, want)) = observed.iter().find(|(&i, want)| &completion[i] != *want) {
            return Err(protocol(
                format!("completion {c} has {:?} at observed position {i}, expected {want:?}", completion[*i]),
                body,
            ));
        }
    }
    Ok(resp.completions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::BridgeError;

    #[test]
    fn conditional_request_wire_form() {
        let req = ConditionalRequest {
            observed: [(10, "x".to_string()), (2, "y".to_string())].into(),
            n: 12,
            count: 3,
            seed: 7,
        };
        let text = serde_json::to_string(&req).unwrap();
        assert_eq!(text, r#"{"observed":{"2":"y","10":"x"},"n":12,"count":3,"seed":7}"#);
        let back: ConditionalRequest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, req);
    }

    #[test]
    fn predict_request_wire_form() {
        let req = PredictRequest {
            instances: vec![vec!["a".into(), "<pad>".into()]],
        };
        assert_eq!(serde_json::to_string(&req).unwrap(), r#"{"instances":[["a","<pad>"]]}"#);
    }

    #[test]
    fn probability_checks() {
        let ok = validate_probs(PredictResponse { probs: vec![vec![0.25, 0.75]] }, 1, 2, "").unwrap();
        assert_eq!(ok, vec![vec![0.25, 0.75]]);

        let slightly_off = validate_probs(PredictResponse { probs: vec![vec![0.5, 0.50005]] }, 1, 2, "").unwrap();
        assert!((slightly_off[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);

        for bad in [vec![vec![0.5, 0.6]], vec![vec![1.0]], vec![vec![-0.1, 1.1]], vec![]] {
            let err = validate_probs(PredictResponse { probs: bad }, 1, 2, "{}").unwrap_err();
            assert!(matches!(err, BridgeError::Protocol { .. }), "{err}");
        }
    }

    #[test]
    fn completion_checks() {
        let observed: BTreeMap<usize, String> = [(0, "a".to_string())].into();
        let good = ConditionalResponse { completions: vec![vec!["a".into(), "b".into()]] };
        assert!(validate_completions(good, &observed, 2, 1, "").is_ok());
        let wrong = ConditionalResponse { completions: vec![vec!["z".into(), "b".into()]] };
        assert!(validate_completions(wrong, &observed, 2, 1, "").is_err());
        let short = ConditionalResponse { completions: vec![vec!["a".into()]] };
        assert!(validate_completions(short, &observed, 2, 1, "").is_err());
    }

    #[test]
    fn excerpts_are_bounded() {
        let long = "x".repeat(1000);
        match parse::<MetaResponse>(&long, "meta").unwrap_err() {
            BridgeError::Protocol { excerpt, .. } => assert_eq!(excerpt.len(), 203),
            other => panic!("{other}"),
        }
    }
}
