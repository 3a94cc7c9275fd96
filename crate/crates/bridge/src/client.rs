//! Blocking HTTP client: chunking, bounded concurrency and retries.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Serialize;

use crate::error::{excerpt, BridgeError, Result};
use crate::protocol::{
    parse, validate_completions, validate_probs, ConditionalRequest, ConditionalResponse, MetaResponse,
    PredictRequest, PredictResponse,
};

type ChunkResult = Result<Vec<Vec<f64>>>;

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Total tries per request, including the first.
    pub attempts: u32,
    /// Wait before the first retry; doubles after each failure.
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            backoff: Duration::from_millis(100),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteEndpoint {
    /// e.g. `http://127.0.0.1:8080`.
    pub base: String,
    pub timeout: Duration,
    pub max_batch: usize,
    pub retry: RetryPolicy,
    /// Chunks sent concurrently by one `predict` call.
    pub max_in_flight: usize,
}

impl RemoteEndpoint {
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            timeout: Duration::from_secs(30),
            max_batch: 64,
            retry: RetryPolicy::default(),
            max_in_flight: 4,
        }
    }

    /// Endpoint from [`crate::ENDPOINT_ENV`], if set.
    pub fn from_env() -> Option<Self> {
        std::env::var(crate::ENDPOINT_ENV)
            .ok()
            .filter(|s| !s.trim().is_empty())
            .map(Self::new)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_batch == 0 {
            return Err(BridgeError::Config("max_batch must be at least 1".into()));
        }
        if self.timeout.is_zero() {
            return Err(BridgeError::Config("timeout must be positive".into()));
        }
        if self.retry.attempts == 0 {
            return Err(BridgeError::Config("retry attempts must be at least 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(BridgeError::Config("max_in_flight must be at least 1".into()));
        }
        if !(self.base.starts_with("http://") || self.base.starts_with("https://")) {
            return Err(BridgeError::Config(format!("endpoint {:?} is not an http(s) address", self.base)));
        }
        Ok(())
    }
}

/// A connection to one endpoint. Counts every HTTP request it issues,
/// retries included.
pub struct RemoteClient {
    endpoint: RemoteEndpoint,
    agent: ureq::Agent,
    requests: AtomicUsize,
}

enum Failure {
    Retryable(String),
    Fatal(BridgeError),
}

impl RemoteClient {
    pub fn new(endpoint: RemoteEndpoint) -> Result<Self> {
        endpoint.validate()?;
        let agent = ureq::AgentBuilder::new().timeout(endpoint.timeout).build();
        Ok(Self {
            endpoint,
            agent,
            requests: AtomicUsize::new(0),
        })
    }

    pub fn endpoint(&self) -> &RemoteEndpoint {
        &self.endpoint
    }

    /// HTTP requests issued so far.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    fn try_post(&self, path: &str, body: &str) -> std::result::Result<String, Failure> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let url = format!("{}{}", self.endpoint.base, path);
        match self
            .agent
            .post(&url)
            .set("Content-Type", "application/json")
            .send_string(body)
        {
            Ok(resp) => resp
                .into_string()
                .map_err(|e| Failure::Retryable(format!("reading {path} response: {e}"))),
            Err(ureq::Error::Status(code, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                Err(if code >= 500 {
                    Failure::Retryable(format!("{path} returned {code}: {}", excerpt(&text)))
                } else {
                    Failure::Fatal(crate::error::protocol(format!("{path} returned {code}"), &text))
                })
            }
            Err(ureq::Error::Transport(t)) => Err(Failure::Retryable(format!("{path}: {t}"))),
        }
    }

    /// POSTs `body` to `path` with retries on transport failures and 5xx.
    pub fn post<T: Serialize>(&self, path: &str, body: &T) -> Result<String> {
        let body = serde_json::to_string(body).map_err(|e| BridgeError::Config(e.to_string()))?;
        let policy = &self.endpoint.retry;
        let mut wait = policy.backoff;
        let mut last = String::new();
        for attempt in 1..=policy.attempts {
            match self.try_post(path, &body) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(msg)) => {
                    log::warn!("attempt {attempt}/{} failed: {msg}", policy.attempts);
                    last = msg;
                    if attempt < policy.attempts {
                        std::thread::sleep(wait);
                        wait *= 2;
                    }
                }
            }
        }
        Err(BridgeError::Transport {
            attempts: policy.attempts,
            message: last,
        })
    }

    pub fn meta(&self) -> Result<MetaResponse> {
        let body = self.post("/meta", &serde_json::json!({}))?;
        let meta: MetaResponse = parse(&body, "/meta")?;
        if meta.label_count == 0 {
            return Err(crate::error::protocol("label_count is 0", &body));
        }
        Ok(meta)
    }

    /// Probabilities for every instance, in input order. Batches larger than
    /// `max_batch` are split, and up to `max_in_flight` chunks are sent at once.
    pub fn predict(&self, instances: &[Vec<String>], label_count: usize) -> Result<Vec<Vec<f64>>> {
        if instances.is_empty() {
            return Ok(Vec::new());
        }
        let chunks: Vec<&[Vec<String>]> = instances.chunks(self.endpoint.max_batch).collect();
        let one = |chunk: &[Vec<String>]| -> Result<Vec<Vec<f64>>> {
            let body = self.post("/predict", &PredictRequest { instances: chunk.to_vec() })?;
            let resp: PredictResponse = parse(&body, "/predict")?;
            validate_probs(resp, chunk.len(), label_count, &body)
        };
        let threads = self.endpoint.max_in_flight.min(chunks.len());
        if threads == 1 {
            return chunks.iter().try_fold(Vec::with_capacity(instances.len()), |mut acc, c| {
                acc.extend(one(c)?);
                Ok(acc)
            });
        }
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<ChunkResult>>> =
            Mutex::new((0..chunks.len()).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(|| loop {
                    let j = next.fetch_add(1, Ordering::SeqCst);
                    if j >= chunks.len() {
                        break;
                    }
                    let r = one(chunks[j]);
                    let failed = r.is_err();
                    results.lock().expect("result lock")[j] = Some(r);
                    if failed {
                        // Stop handing out chunks; the first error is reported.
                        next.store(chunks.len(), Ordering::SeqCst);
                    }
                });
            }
        });
        let mut out = Vec::with_capacity(instances.len());
        for r in results.into_inner().expect("result lock").into_iter().flatten() {
            out.extend(r?);
        }
        if out.len() != instances.len() {
            return Err(BridgeError::Transport {
                attempts: self.endpoint.retry.attempts,
                message: "prediction aborted after an earlier chunk failed".into(),
            });
        }
        Ok(out)
    }

    /// `count` completions of the partial observation, drawn with `seed`.
    pub fn conditional(
        &self,
        observed: &BTreeMap<usize, String>,
        n: usize,
        count: usize,
        seed: u64,
    ) -> Result<Vec<Vec<String>>> {
        if count == 0 {
            return Err(BridgeError::Config("count must be at least 1".into()));
        }
        if let Some((&i, _)) = observed.iter().next_back().filter(|(&i, _)| i >= n) {
            return Err(BridgeError::Config(format!("observed index {i} out of range for length {n}")));
        }
        let req = ConditionalRequest {
            observed: observed.clone(),
            n,
            count,
            seed,
        };
        let body = self.post("/conditional", &req)?;
        let resp: ConditionalResponse = parse(&body, "/conditional")?;
        validate_completions(resp, observed, n, count, &body)
    }
}
