//! In-process stub server speaking the wire protocol, for tests and for
//! trying the CLI without a real model.
//!
//! `/predict` returns a deterministic distribution per instance (seeded by a
//! hash of its tokens), or uniform rows. `/conditional` fills unobserved
//! positions with the pad token. Every request is counted and its body kept.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::protocol::{ConditionalRequest, ConditionalResponse, MetaResponse, PredictRequest, PredictResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StubRows {
    /// A seeded pseudo-random row per distinct instance.
    Hashed { seed: u64 },
    Uniform,
}

#[derive(Debug, Clone)]
pub struct StubConfig {
    pub label_count: usize,
    pub pad_token: String,
    pub rows: StubRows,
    /// Answer the first this-many requests with 503.
    pub fail_first: usize,
}

impl Default for StubConfig {
    fn default() -> Self {
        Self {
            label_count: 2,
            pad_token: "<pad>".into(),
            rows: StubRows::Hashed { seed: 0 },
            fail_first: 0,
        }
    }
}

#[derive(Default)]
struct Log {
    seen: usize,
    counts: HashMap<String, usize>,
    bodies: Vec<(String, String)>,
}

pub struct StubServer {
    addr: SocketAddr,
    server: Arc<tiny_http::Server>,
    log: Arc<Mutex<Log>>,
    thread: Option<JoinHandle<()>>,
}

fn fnv1a(tokens: &[String]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for t in tokens {
        for b in t.bytes().chain([0x1f]) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// The row the stub returns for `tokens`.
pub fn stub_row(cfg: &StubConfig, tokens: &[String]) -> Vec<f64> {
    match cfg.rows {
        StubRows::Uniform => vec![1.0 / cfg.label_count as f64; cfg.label_count],
        StubRows::Hashed { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(tokens) ^ seed);
            let raw: Vec<f64> = (0..cfg.label_count).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect()
        }
    }
}

fn respond(cfg: &StubConfig, path: &str, body: &str) -> (u16, String) {
    let bad = |e: String| (400, json!({ "error": e }).to_string());
    match path {
        "/meta" => {
            let meta = MetaResponse {
                label_count: cfg.label_count,
                pad_token: cfg.pad_token.clone(),
            };
            (200, serde_json::to_string(&meta).expect("serializable"))
        }
        "/predict" => match serde_json::from_str::<PredictRequest>(body) {
            Ok(req) => {
                let probs = req.instances.iter().map(|x| stub_row(cfg, x)).collect();
                (200, serde_json::to_string(&PredictResponse { probs }).expect("serializable"))
            }
            Err(e) => bad(e.to_string()),
        },
        "/conditional" => match serde_json::from_str::<ConditionalRequest>(body) {
            Ok(req) if req.observed.keys().any(|&i| i >= req.n) => bad("observed index out of range".into()),
            Ok(req) => {
                let filled: Vec<String> = (0..req.n)
                    .map(|i| req.observed.get(&i).cloned().unwrap_or_else(|| cfg.pad_token.clone()))
                    .collect();
                let resp = ConditionalResponse {
                    completions: vec![filled; req.count],
                };
                (200, serde_json::to_string(&resp).expect("serializable"))
            }
            Err(e) => bad(e.to_string()),
        },
        other => (404, json!({ "error": format!("unknown path {other}") }).to_string()),
    }
}

impl StubServer {
    /// Binds `127.0.0.1` on a free port and serves until dropped.
    pub fn start(cfg: StubConfig) -> std::io::Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("stub server has no IP address"))?;
        let server = Arc::new(server);
        let log = Arc::new(Mutex::new(Log::default()));
        let thread = {
            let (server, log) = (server.clone(), log.clone());
            std::thread::spawn(move || {
                while let Ok(mut req) = server.recv() {
                    let mut body = String::new();
                    let _ = req.as_reader().read_to_string(&mut body);
                    let path = req.url().to_string();
                    let fail = {
                        let mut log = log.lock().expect("stub log");
                        log.seen += 1;
                        *log.counts.entry(path.clone()).or_default() += 1;
                        log.bodies.push((path.clone(), body.clone()));
                        log.seen <= cfg.fail_first
                    };
                    let (status, text) = if fail {
                        (503, json!({ "error": "unavailable" }).to_string())
                    } else {
                        respond(&cfg, &path, &body)
                    };
                    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("header");
                    let _ = req.respond(tiny_http::Response::from_string(text).with_status_code(status).with_header(header));
                }
            })
        };
        Ok(Self {
            addr,
            server,
            log,
            thread: Some(thread),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Requests received on `path`.
    pub fn count(&self, path: &str) -> usize {
        self.log.lock().expect("stub log").counts.get(path).copied().unwrap_or(0)
    }

    pub fn total_requests(&self) -> usize {
        self.log.lock().expect("stub log").seen
    }

    /// `(path, body)` of every request so far, in arrival order.
    pub fn bodies(&self) -> Vec<(String, String)> {
        self.log.lock().expect("stub log").bodies.clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
