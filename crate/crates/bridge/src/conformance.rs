//! Protocol conformance suite, runnable against any endpoint.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::client::{RemoteClient, RemoteEndpoint};
use crate::error::Result;
use crate::protocol::{parse, PredictRequest, PredictResponse, RENORMALIZE_THRESHOLD};

#[derive(Debug, Clone)]
pub struct ConformanceConfig {
    /// Tokens used to build probe instances; the server must accept them.
    pub tokens: Vec<String>,
    /// Probe instance length.
    pub n: usize,
    /// Chunk size for the chunking check.
    pub max_batch: usize,
    pub seed: u64,
}

impl Default for ConformanceConfig {
    fn default() -> Self {
        Self {
            tokens: ["the", "movie", "was", "good", "bad", "not", "very", "plot"]
                .map(String::from)
                .to_vec(),
            n: 4,
            max_batch: 3,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConformanceReport {
    pub endpoint: String,
    pub checks: Vec<CheckResult>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }
}

/// Distinct probe instances: instance `j` spells `j` in base `tokens.len()`.
/// Every third instance has its last position padded.
fn probes(cfg: &ConformanceConfig, count: usize, pad: &str) -> Vec<Vec<String>> {
    let k = cfg.tokens.len();
    (0..count)
        .map(|j| {
            let mut digits = j;
            let mut x: Vec<String> = (0..cfg.n)
                .map(|_| {
                    let t = cfg.tokens[digits % k].clone();
                    digits /= k;
                    t
                })
                .collect();
            if j % 3 == 2 {
                x[cfg.n - 1] = pad.to_string();
            }
            x
        })
        .collect()
}

struct Suite {
    checks: Vec<CheckResult>,
}

impl Suite {
    fn record(&mut self, name: &str, outcome: std::result::Result<String, String>) {
        let (passed, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        self.checks.push(CheckResult {
            name: name.into(),
            passed,
            detail,
        });
    }
}

fn err_string<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Runs every check against `endpoint`. Only configuration problems are
/// returned as errors; server misbehavior shows up as failed checks.
pub fn run(endpoint: &RemoteEndpoint, cfg: &ConformanceConfig) -> Result<ConformanceReport> {
    if cfg.tokens.is_empty() || cfg.n == 0 || cfg.max_batch == 0 {
        return Err(crate::BridgeError::Config(
            "conformance needs tokens, n >= 1 and max_batch >= 1".into(),
        ));
    }
    let mut ep = endpoint.clone();
    ep.max_batch = cfg.max_batch;
    let client = RemoteClient::new(ep)?;
    let mut suite = Suite { checks: Vec::new() };

    let meta = client.meta();
    suite.record(
        "meta",
        match &meta {
            Ok(m) if !m.pad_token.is_empty() => Ok(format!("label_count {}, pad {:?}", m.label_count, m.pad_token)),
            Ok(_) => Err("empty pad token".into()),
            Err(e) => Err(e.to_string()),
        },
    );
    let Ok(meta) = meta else {
        return Ok(ConformanceReport {
            endpoint: endpoint.base.clone(),
            checks: suite.checks,
        });
    };
    let labels = meta.label_count;

    suite.record(
        "meta-consistency",
        (|| {
            let body = err_string(client.post("/predict", &PredictRequest { instances: probes(cfg, 2, &meta.pad_token) }))?;
            let resp: PredictResponse = err_string(parse(&body, "/predict"))?;
            if resp.probs.len() != 2 {
                return Err(format!("2 instances gave {} rows", resp.probs.len()));
            }
            for row in &resp.probs {
                if row.len() != labels {
                    return Err(format!("row width {} but label_count {labels}", row.len()));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > RENORMALIZE_THRESHOLD {
                    return Err(format!("row sums to {sum}"));
                }
            }
            Ok(format!("rows have {labels} probabilities summing to 1"))
        })(),
    );

    suite.record(
        "empty-batch",
        (|| {
            let before = client.request_count();
            let out = err_string(client.predict(&[], labels))?;
            match (out.is_empty(), client.request_count() - before) {
                (true, 0) => Ok("empty result, no request".into()),
                (empty, sent) => Err(format!("empty result {empty}, {sent} request(s)")),
            }
        })(),
    );

    let batch = probes(cfg, 2 * cfg.max_batch + 1, &meta.pad_token);
    let before = client.request_count();
    let chunked = client.predict(&batch, labels);
    let sent = client.request_count() - before;
    suite.record(
        "chunking",
        match &chunked {
            Ok(_) if sent == 3 => Ok(format!("{} instances, max_batch {}, 3 requests", batch.len(), cfg.max_batch)),
            Ok(_) => Err(format!("expected 3 requests, saw {sent}")),
            Err(e) => Err(e.to_string()),
        },
    );

    suite.record(
        "order-preservation",
        (|| {
            let chunked = chunked.as_ref().map_err(|e| e.to_string())?;
            let mut diffs = Vec::new();
            for (j, x) in batch.iter().enumerate() {
                let single = err_string(client.predict(std::slice::from_ref(x), labels))?;
                if single[0] != chunked[j] {
                    diffs.push(j);
                }
            }
            if diffs.is_empty() {
                Ok(format!("{} rows match single-instance requests", batch.len()))
            } else {
                Err(format!("rows differ at {diffs:?}"))
            }
        })(),
    );

    suite.record(
        "predict-replay",
        (|| {
            let again = err_string(client.predict(&batch, labels))?;
            if chunked.as_ref().is_ok_and(|c| *c == again) {
                Ok("identical rows".into())
            } else {
                Err("repeated request gave different rows".into())
            }
        })(),
    );

    let full: BTreeMap<usize, String> = batch[0].iter().cloned().enumerate().collect();
    suite.record(
        "conditional-fully-observed",
        (|| {
            let out = err_string(client.conditional(&full, cfg.n, 3, cfg.seed))?;
            if out.iter().all(|c| *c == batch[0]) {
                Ok("3 copies of the observed instance".into())
            } else {
                Err(format!("completions {out:?}"))
            }
        })(),
    );

    let partial: BTreeMap<usize, String> = full.into_iter().filter(|(i, _)| i % 2 == 0).collect();
    suite.record(
        "conditional-replay",
        (|| {
            let a = err_string(client.conditional(&partial, cfg.n, 4, cfg.seed))?;
            let b = err_string(client.conditional(&partial, cfg.n, 4, cfg.seed))?;
            if a == b {
                Ok("identical completions honoring observed positions".into())
            } else {
                Err("same seed gave different completions".into())
            }
        })(),
    );

    Ok(ConformanceReport {
        endpoint: endpoint.base.clone(),
        checks: suite.checks,
    })
}
