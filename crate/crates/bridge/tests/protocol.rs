use std::sync::Arc;
use std::time::Duration;

use asymshap::engine::shapley_sampling;
use asymshap::{DonorSource, Instance, Model, PartialInstance, SamplingConfig, ValueFunctionSpec, Vocab};
use asymshap_bridge::conformance::{self, ConformanceConfig};
use asymshap_bridge::stub::{stub_row, StubConfig, StubRows, StubServer};
use asymshap_bridge::{
    BridgeError, RemoteClient, RemoteConditionalProvider, RemoteEndpoint, RemoteModel, RetryPolicy, ENDPOINT_ENV,
};

fn endpoint(server: &StubServer, max_batch: usize) -> RemoteEndpoint {
    let mut ep = RemoteEndpoint::new(server.url());
    ep.max_batch = max_batch;
    ep.timeout = Duration::from_secs(5);
    ep.retry = RetryPolicy { attempts: 3, backoff: Duration::from_millis(1) };
    ep
}

fn connect(server: &StubServer, max_batch: usize) -> (RemoteModel, Arc<Vocab>) {
    let vocab = Arc::new(Vocab::new());
    let client = Arc::new(RemoteClient::new(endpoint(server, max_batch)).unwrap());
    (RemoteModel::connect(client, vocab.clone()).unwrap(), vocab)
}

fn instances(vocab: &Vocab, pad: asymshap::Token, count: usize) -> Vec<Instance> {
    (0..count)
        .map(|j| {
            let tokens = vec![vocab.intern(&format!("w{j}")), vocab.intern("x"), vocab.intern(&format!("v{}", j % 3))];
            Instance::new(tokens, pad).unwrap()
        })
        .collect()
}

#[test]
fn uniform_stub_gives_uniform_rows() {
    let server = StubServer::start(StubConfig { label_count: 3, rows: StubRows::Uniform, ..Default::default() }).unwrap();
    let (model, vocab) = connect(&server, 4);
    assert_eq!(model.label_count(), 3);
    let out = model.predict_batch(&instances(&vocab, model.pad(), 5)).unwrap();
    assert!(out.iter().all(|d| d.probs().iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-12)));
}

#[test]
fn chunking_issues_exactly_three_requests_and_preserves_order() {
    let server = StubServer::start(StubConfig::default()).unwrap();
    let b = 4;
    let (model, vocab) = connect(&server, b);
    let xs = instances(&vocab, model.pad(), 2 * b + 1);
    let before = server.count("/predict");
    let rows = model.predict_batch(&xs).unwrap();
    assert_eq!(server.count("/predict") - before, 3);
    let cfg = StubConfig::default();
    for (x, row) in xs.iter().zip(&rows) {
        let names: Vec<String> = x.features().iter().map(|&t| vocab.name(t).unwrap().to_string()).collect();
        assert_eq!(row.probs(), stub_row(&cfg, &names).as_slice());
    }
}

#[test]
fn request_bodies_are_byte_exact() {
    let server = StubServer::start(StubConfig::default()).unwrap();
    let (model, vocab) = connect(&server, 8);
    let x = Instance::new(vec![vocab.intern("good"), model.pad()], model.pad()).unwrap();
    model.predict(&x).unwrap();
    let provider = RemoteConditionalProvider::new(model.client().clone(), vocab.clone(), model.pad());
    let observed = PartialInstance::new([(1, vocab.intern("plot"))].into(), 3).unwrap();
    provider.complete(&observed, 2, 99).unwrap();
    let bodies = server.bodies();
    assert_eq!(bodies[0], ("/meta".into(), "{}".into()));
    assert_eq!(bodies[1], ("/predict".into(), r#"{"instances":[["good","<pad>"]]}"#.into()));
    assert_eq!(bodies[2], ("/conditional".into(), r#"{"observed":{"1":"plot"},"n":3,"count":2,"seed":99}"#.into()));
}

#[test]
fn empty_batch_sends_nothing() {
    let server = StubServer::start(StubConfig::default()).unwrap();
    let (model, _) = connect(&server, 2);
    assert!(model.predict_batch(&[]).unwrap().is_empty());
    assert_eq!(server.count("/predict"), 0);
}

#[test]
fn retried_requests_match_first_attempt_results() {
    let flaky = StubServer::start(StubConfig { fail_first: 2, ..Default::default() }).unwrap();
    let steady = StubServer::start(StubConfig::default()).unwrap();
    let (a, va) = connect(&flaky, 8);
    let (b, vb) = connect(&steady, 8);
    assert_eq!(flaky.count("/meta"), 3);
    let ra = a.predict_batch(&instances(&va, a.pad(), 4)).unwrap();
    let rb = b.predict_batch(&instances(&vb, b.pad(), 4)).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn exhausted_retries_are_transport_errors() {
    let server = StubServer::start(StubConfig { fail_first: 10, ..Default::default() }).unwrap();
    let client = RemoteClient::new(endpoint(&server, 2)).unwrap();
    let err = client.meta().unwrap_err();
    assert!(matches!(err, BridgeError::Transport { attempts: 3, .. }), "{err}");
    assert_eq!(server.total_requests(), 3);
}

#[test]
fn conditional_completions_honor_observations() {
    let server = StubServer::start(StubConfig::default()).unwrap();
    let (model, vocab) = connect(&server, 8);
    let provider = RemoteConditionalProvider::new(model.client().clone(), vocab.clone(), model.pad());
    let x = instances(&vocab, model.pad(), 1).remove(0);
    let full = PartialInstance::from_mask(&x, 0b111);
    assert_eq!(provider.complete(&full, 3, 1).unwrap(), vec![x.clone(); 3]);
    let partial = PartialInstance::from_mask(&x, 0b010);
    let a = provider.complete(&partial, 2, 5).unwrap();
    assert_eq!(a, provider.complete(&partial, 2, 5).unwrap());
    let padded = Instance::new(vec![model.pad(), x.features()[1], model.pad()], model.pad()).unwrap();
    assert_eq!(a, vec![padded; 2]);
}

#[test]
fn remote_components_drive_seeded_sampling() {
    let server = StubServer::start(StubConfig::default()).unwrap();
    let (model, vocab) = connect(&server, 16);
    let pad = model.pad();
    let provider = RemoteConditionalProvider::new(model.client().clone(), vocab.clone(), pad);
    let x = instances(&vocab, pad, 1).remove(0);
    let model: Arc<dyn Model> = Arc::new(model);
    let spec = ValueFunctionSpec::new(model, 1, DonorSource::Conditional(Arc::new(provider))).unwrap();
    let cfg = SamplingConfig { m: 5, seed: 3, reweighted: true, ..Default::default() };
    let a = shapley_sampling(&spec, &x, &cfg).unwrap();
    let b = shapley_sampling(&spec, &x, &SamplingConfig { workers: 3, batch_size: 2, ..cfg }).unwrap();
    assert_eq!(a, b);
}

#[test]
fn conformance_suite_passes_against_the_stub() {
    let server = StubServer::start(StubConfig::default()).unwrap();
    let report = conformance::run(&endpoint(&server, 64), &ConformanceConfig::default()).unwrap();
    assert!(report.passed(), "{report:#?}");
    assert_eq!(report.checks.len(), 8);
}

/// Serves `/meta` claiming three labels but answers `/predict` with two.
fn lying_server() -> (String, std::thread::JoinHandle<()>, Arc<tiny_http::Server>) {
    let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let s = server.clone();
    let handle = std::thread::spawn(move || {
        while let Ok(mut req) = s.recv() {
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            let text = match req.url() {
                "/meta" => r#"{"label_count":3,"pad_token":"<pad>"}"#.to_string(),
                _ => {
                    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
                    let rows = v["instances"].as_array().map(|a| a.len()).unwrap_or(0);
                    serde_json::json!({ "probs": vec![[0.5, 0.5]; rows] }).to_string()
                }
            };
            let _ = req.respond(tiny_http::Response::from_string(text));
        }
    });
    (url, handle, server)
}

#[test]
fn malformed_responses_are_protocol_errors() {
    let (url, handle, server) = lying_server();
    let mut ep = RemoteEndpoint::new(url);
    ep.retry = RetryPolicy { attempts: 1, backoff: Duration::ZERO };
    let vocab = Arc::new(Vocab::new());
    let model = RemoteModel::connect(Arc::new(RemoteClient::new(ep.clone()).unwrap()), vocab.clone()).unwrap();
    let err = model.predict_remote(&instances(&vocab, model.pad(), 1)).unwrap_err();
    match err {
        BridgeError::Protocol { excerpt, .. } => assert!(excerpt.contains("probs")),
        other => panic!("{other}"),
    }
    let report = conformance::run(&ep, &ConformanceConfig::default()).unwrap();
    assert!(!report.passed());
    assert!(report.checks.iter().any(|c| c.name == "meta-consistency" && !c.passed));
    server.unblock();
    handle.join().unwrap();
}

#[test]
fn endpoint_from_environment() {
    std::env::set_var(ENDPOINT_ENV, "http://example.invalid:1234/");
    let ep = RemoteEndpoint::from_env().unwrap();
    assert_eq!(ep.base, "http://example.invalid:1234");
    std::env::set_var(ENDPOINT_ENV, "");
    assert!(RemoteEndpoint::from_env().is_none());
    std::env::remove_var(ENDPOINT_ENV);
}

#[test]
fn unknown_tokens_are_rejected_before_sending() {
    let server = StubServer::start(StubConfig::default()).unwrap();
    let (model, _) = connect(&server, 4);
    let stranger = Instance::new(vec![asymshap::Token(12345)], model.pad()).unwrap();
    assert!(model.predict(&stranger).is_err());
    assert_eq!(server.count("/predict"), 0);
}
