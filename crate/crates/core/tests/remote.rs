//! Wire-protocol tests for the remote backend against an in-process stub server.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use aeon_core::backends::{
    BackendError, EmbeddingProvider, MaskedLmProvider, ReferenceBackend, ReferenceBackendConfig,
    RemoteBackend, RemoteBackendConfig,
};
use aeon_core::corpus::{score_corpus, TaskKind, TestCaseRecord};
use aeon_core::syneval::{mask_at, nat_score, Aggregation};
use aeon_core::{tokenize, Execution, RunConfig};
use serde_json::{json, Value};

#[derive(Clone)]
struct Behavior {
    info_dim: usize,
    vector_dim: usize,
    protocol: u32,
    max_tokens: usize,
    delay_ms: u64,
    fail_embed: bool,
    sentence_vector: bool,
}

impl Default for Behavior {
    fn default() -> Self {
        Self {
            info_dim: 4,
            vector_dim: 4,
            protocol: 1,
            max_tokens: 64,
            delay_ms: 0,
            fail_embed: false,
            sentence_vector: false,
        }
    }
}

struct Stub {
    url: String,
    paths: Arc<Mutex<Vec<String>>>,
    batch_sizes: Arc<Mutex<Vec<usize>>>,
    peak: Arc<AtomicUsize>,
}

/// Identity rows: token `i` maps to the unit vector `e_(i mod dim)`.
fn embed_answer(b: &Behavior, tokens: &[Value]) -> Value {
    let vectors: Vec<Vec<f64>> = (0..tokens.len())
        .map(|i| {
            (0..b.vector_dim)
                .map(|k| if k == i % b.vector_dim { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let mut out = json!({"vectors": vectors, "dim": b.vector_dim});
    if b.sentence_vector {
        out["sentence_vector"] = json!(vec![0.5; b.vector_dim]);
    }
    out
}

/// Probability depends on the masked index and the sentence length only.
fn prob_answer(tokens: &[Value], index: usize) -> Value {
    json!({"prob": 1.0 / (index as f64 + 2.0) + tokens.len() as f64 / 1000.0})
}

fn answer(b: &Behavior, req: &Value) -> Value {
    let tokens = req["tokens"].as_array().cloned().unwrap_or_default();
    match req.get("index").and_then(Value::as_u64) {
        Some(i) => prob_answer(&tokens, i as usize),
        None => embed_answer(b, &tokens),
    }
}

fn spawn(b: Behavior) -> Stub {
    let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let paths = Arc::new(Mutex::new(Vec::new()));
    let batch_sizes = Arc::new(Mutex::new(Vec::new()));
    let live = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    for _ in 0..8 {
        let (server, b) = (server.clone(), b.clone());
        let (paths, batch_sizes, live, peak) = (
            paths.clone(),
            batch_sizes.clone(),
            live.clone(),
            peak.clone(),
        );
        thread::spawn(move || loop {
            let Ok(mut rq) = server.recv() else { return };
            let now = live.fetch_add(1, Ordering::SeqCst) + 1;
            peak.fetch_max(now, Ordering::SeqCst);
            let path = rq.url().to_string();
            paths.lock().unwrap().push(path.clone());
            let mut body = String::new();
            rq.as_reader().read_to_string(&mut body).ok();
            if b.delay_ms > 0 {
                thread::sleep(Duration::from_millis(b.delay_ms));
            }
            let req: Value = serde_json::from_str(&body).unwrap_or(Value::Null);
            let (status, out) = match path.as_str() {
                "/v1/info" => (
                    200,
                    json!({"model": "stub-echo", "dim": b.info_dim, "max_tokens": b.max_tokens, "protocol": b.protocol}),
                ),
                "/v1/embed" if b.fail_embed => (500, json!({"error": "model crashed"})),
                "/v1/embed" | "/v1/token_prob" => (200, answer(&b, &req)),
                "/v1/batch" => {
                    let reqs = req["requests"].as_array().cloned().unwrap_or_default();
                    batch_sizes.lock().unwrap().push(reqs.len());
                    let resps: Vec<Value> = reqs.iter().map(|r| answer(&b, r)).collect();
                    (200, json!({"responses": resps}))
                }
                _ => (404, json!({"error": "no such endpoint"})),
            };
            let resp = tiny_http::Response::from_string(out.to_string())
                .with_status_code(status)
                .with_header(
                    "Content-Type: application/json"
                        .parse::<tiny_http::Header>()
                        .unwrap(),
                );
            live.fetch_sub(1, Ordering::SeqCst);
            rq.respond(resp).ok();
        });
    }
    Stub {
        url,
        paths,
        batch_sizes,
        peak,
    }
}

fn connect(stub: &Stub, max_batch: usize) -> RemoteBackend {
    let mut cfg = RemoteBackendConfig::new(&stub.url);
    cfg.max_batch = max_batch;
    cfg.timeout_ms = 5_000;
    RemoteBackend::connect(cfg).unwrap()
}

#[test]
fn handshake_reports_model() {
    let stub = spawn(Behavior::default());
    let backend = connect(&stub, 8);
    assert_eq!(backend.info().model, "stub-echo");
    assert_eq!(backend.info().protocol, 1);
    assert_eq!(backend.dim(), 4);
}

#[test]
fn protocol_mismatch_is_rejected() {
    let stub = spawn(Behavior {
        protocol: 2,
        ..Behavior::default()
    });
    let err = RemoteBackend::connect(RemoteBackendConfig::new(&stub.url)).unwrap_err();
    assert!(matches!(err, BackendError::Protocol(_)), "{err:?}");
}

#[test]
fn embeddings_pass_through_unchanged() {
    let stub = spawn(Behavior::default());
    let backend = connect(&stub, 8);
    let out = backend.embed(&tokenize("a b c d e")).unwrap();
    assert_eq!(out.tokens.n_rows(), 5);
    for i in 0..5 {
        let expected: Vec<f64> = (0..4).map(|k| if k == i % 4 { 1.0 } else { 0.0 }).collect();
        assert_eq!(out.tokens.row(i), expected.as_slice());
    }
    assert!(out.sentence.is_none());
}

#[test]
fn sentence_vector_is_surfaced() {
    let stub = spawn(Behavior {
        sentence_vector: true,
        ..Behavior::default()
    });
    let backend = connect(&stub, 8);
    let out = backend.embed(&tokenize("x y")).unwrap();
    assert_eq!(out.sentence, Some(vec![0.5; 4]));
}

#[test]
fn wrong_dimension_is_reported() {
    let stub = spawn(Behavior {
        vector_dim: 3,
        ..Behavior::default()
    });
    let backend = connect(&stub, 8);
    let err = backend.embed(&tokenize("a b")).unwrap_err();
    assert_eq!(
        err,
        BackendError::DimensionMismatch {
            expected: 4,
            got: 3
        }
    );
}

#[test]
fn server_error_status_carries_message() {
    let stub = spawn(Behavior {
        fail_embed: true,
        ..Behavior::default()
    });
    let backend = connect(&stub, 8);
    let err = backend.embed(&tokenize("a")).unwrap_err();
    assert_eq!(
        err,
        BackendError::Server {
            status: 500,
            message: "model crashed".into()
        }
    );
}

#[test]
fn timeout_is_its_own_error_kind() {
    let stub = spawn(Behavior {
        delay_ms: 600,
        ..Behavior::default()
    });
    let mut cfg = RemoteBackendConfig::new(&stub.url);
    cfg.timeout_ms = 150;
    let err = RemoteBackend::connect(cfg).unwrap_err();
    assert!(matches!(err, BackendError::Timeout { .. }), "{err:?}");
}

#[test]
fn too_many_tokens_rejected_client_side() {
    let stub = spawn(Behavior {
        max_tokens: 3,
        ..Behavior::default()
    });
    let backend = connect(&stub, 8);
    let err = backend.embed(&tokenize("a b c d")).unwrap_err();
    assert_eq!(err, BackendError::TooManyTokens { count: 4, max: 3 });
}

#[test]
fn batching_splits_and_matches_unbatched() {
    let stub = spawn(Behavior::default());
    let batched = connect(&stub, 2);
    let seqs = [
        tokenize("one two"),
        tokenize("three"),
        tokenize("four five six"),
    ];
    let refs: Vec<&_> = seqs.iter().collect();
    let via_batch = batched.embed_batch(&refs).unwrap();
    assert_eq!(*stub.batch_sizes.lock().unwrap(), vec![2, 1]);
    let unbatched = connect(&stub, 1);
    let one_by_one: Vec<_> = seqs.iter().map(|s| unbatched.embed(s).unwrap()).collect();
    assert_eq!(via_batch, one_by_one);
}

#[test]
fn masked_batches_preserve_order() {
    let stub = spawn(Behavior::default());
    let backend = connect(&stub, 3);
    let seq = tokenize("a b c d e f g");
    let queries: Vec<_> = (0..seq.len()).map(|i| mask_at(&seq, i).unwrap()).collect();
    let probs = backend.token_probabilities(&queries).unwrap();
    let expected: Vec<f64> = (0..7).map(|i| 1.0 / (i as f64 + 2.0) + 0.007).collect();
    assert_eq!(probs, expected);
    assert_eq!(*stub.batch_sizes.lock().unwrap(), vec![3, 3, 1]);
    let single = backend.token_probability(&queries[4]).unwrap();
    assert_eq!(single, expected[4]);

    let score = nat_score(&seq, &backend, 0.6, Aggregation::Arithmetic).unwrap();
    assert_eq!(score.token_probs, expected);
}

#[test]
fn concurrent_scoring_respects_inflight_bound_and_is_order_independent() {
    let stub = spawn(Behavior {
        delay_ms: 5,
        ..Behavior::default()
    });
    let mut cfg = RemoteBackendConfig::new(&stub.url);
    cfg.max_inflight = 2;
    cfg.max_batch = 4;
    let backend = RemoteBackend::connect(cfg).unwrap();
    let records: Vec<TestCaseRecord> = (0..12)
        .map(|i| TestCaseRecord {
            id: format!("r{i}"),
            task: TaskKind::Se,
            original: format!("is this question number {i} the same ?"),
            generated: format!("is this query number {i} the same ?"),
            original_label: "dup".into(),
            human: None,
            predicted_label: None,
        })
        .collect();
    let cfg = RunConfig::default();
    let seq = score_corpus(&records, &backend, &backend, &cfg, Execution::Sequential).unwrap();
    let par = score_corpus(
        &records,
        &backend,
        &backend,
        &cfg,
        Execution::Parallel { jobs: 6 },
    )
    .unwrap();
    assert_eq!(seq, par);
    assert!(seq.iter().all(Result::is_ok));
    assert!(
        stub.peak.load(Ordering::SeqCst) <= 2,
        "peak {}",
        stub.peak.load(Ordering::SeqCst)
    );
    assert!(stub.paths.lock().unwrap().iter().any(|p| p == "/v1/batch"));
}

/// Any scorer sees providers only through the two trait methods, so the remote
/// backend scoring through a stub and a local provider answering the same
/// numbers must agree.
#[test]
fn provider_substitution() {
    struct Local;
    impl EmbeddingProvider for Local {
        fn dim(&self) -> usize {
            4
        }
        fn embed(
            &self,
            seq: &aeon_core::TokenSequence,
        ) -> Result<aeon_core::backends::EmbeddedText, BackendError> {
            let rows = (0..seq.len())
                .map(|i| (0..4).map(|k| if k == i % 4 { 1.0 } else { 0.0 }).collect())
                .collect();
            Ok(aeon_core::backends::EmbeddedText {
                tokens: aeon_core::backends::Embeddings::from_rows(4, rows)?,
                sentence: None,
            })
        }
    }
    impl MaskedLmProvider for Local {
        fn token_probability(
            &self,
            q: &aeon_core::syneval::MaskedQuery<'_>,
        ) -> Result<f64, BackendError> {
            Ok(1.0 / (q.target_index() as f64 + 2.0) + q.tokens().len() as f64 / 1000.0)
        }
    }

    let stub = spawn(Behavior::default());
    let remote = connect(&stub, 4);
    let records = vec![TestCaseRecord {
        id: "x".into(),
        task: TaskKind::Sa,
        original: "I do like this film".into(),
        generated: "I do not like this film".into(),
        original_label: "pos".into(),
        human: None,
        predicted_label: None,
    }];
    let cfg = RunConfig::default();
    let a = score_corpus(&records, &remote, &remote, &cfg, Execution::Sequential).unwrap();
    let b = score_corpus(&records, &Local, &Local, &cfg, Execution::Sequential).unwrap();
    assert_eq!(a, b);

    // and the reference backend is a drop-in for both roles
    let r = ReferenceBackend::new(ReferenceBackendConfig::default()).unwrap();
    assert!(score_corpus(&records, &r, &r, &cfg, Execution::Sequential).unwrap()[0].is_ok());
}
