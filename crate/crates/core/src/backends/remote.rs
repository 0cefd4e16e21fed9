//! Blocking JSON-over-HTTP client for the model server.
//!
//! Endpoints (protocol 1):
//!
//! | method | path             | body                          | response                                   |
//! |--------|------------------|-------------------------------|--------------------------------------------|
//! | GET    | `/v1/info`       |                               | `{"model", "dim", "max_tokens", "protocol"}` |
//! | POST   | `/v1/embed`      | `{"tokens": [..]}`            | `{"vectors": [[..]], "dim", "sentence_vector"?}` |
//! | POST   | `/v1/token_prob` | `{"tokens": [..], "index": i}` | `{"prob"}`                                 |
//! | POST   | `/v1/batch`      | `{"requests": [..]}`          | `{"responses": [..]}` in request order     |
//!
//! Non-2xx responses carry `{"error": string}`. Retries are left to callers.

use std::io;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BackendError, EmbeddedText, EmbeddingProvider, Embeddings, MaskedLmProvider};
use crate::syneval::MaskedQuery;
use crate::text::TokenSequence;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteBackendConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    pub max_batch: usize,
    pub max_inflight: usize,
}

impl RemoteBackendConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout_ms: 30_000,
            max_batch: 32,
            max_inflight: 4,
        }
    }

    fn validate(&self) -> Result<(), BackendError> {
        if self.timeout_ms == 0 {
            return Err(BackendError::Config("timeout must be positive".into()));
        }
        if self.max_batch == 0 || self.max_inflight == 0 {
            return Err(BackendError::Config(
                "max_batch and max_inflight must be positive".into(),
            ));
        }
        if self.endpoint.is_empty() {
            return Err(BackendError::Config("endpoint is empty".into()));
        }
        Ok(())
    }
}

/// Server self-description returned by `GET /v1/info`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub model: String,
    pub dim: usize,
    pub max_tokens: usize,
    pub protocol: u32,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    tokens: Vec<&'a str>,
}

#[derive(Serialize)]
struct TokenProbRequest<'a> {
    tokens: Vec<&'a str>,
    index: usize,
}

#[derive(Serialize)]
struct BatchRequest<T> {
    requests: Vec<T>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
    #[serde(default)]
    sentence_vector: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct TokenProbResponse {
    prob: f64,
}

#[derive(Deserialize)]
struct BatchResponse {
    responses: Vec<Value>,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

/// Counting gate bounding concurrent requests.
#[derive(Debug)]
struct InflightGate {
    max: usize,
    busy: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InflightGate);

impl InflightGate {
    fn new(max: usize) -> Self {
        Self {
            max,
            busy: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut busy = self.busy.lock().unwrap_or_else(|e| e.into_inner());
        while *busy >= self.max {
            busy = self.freed.wait(busy).unwrap_or_else(|e| e.into_inner());
        }
        *busy += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut busy = self.0.busy.lock().unwrap_or_else(|e| e.into_inner());
        *busy -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug)]
pub struct RemoteBackend {
    cfg: RemoteBackendConfig,
    base: String,
    agent: ureq::Agent,
    info: ModelInfo,
    gate: InflightGate,
}

impl RemoteBackend {
    /// Performs the `/v1/info` handshake and checks the protocol version.
    pub fn connect(cfg: RemoteBackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build();
        let base = cfg.endpoint.trim_end_matches('/').to_string();
        let mut backend = Self {
            gate: InflightGate::new(cfg.max_inflight),
            cfg,
            base,
            agent,
            info: ModelInfo {
                model: String::new(),
                dim: 0,
                max_tokens: 0,
                protocol: 0,
            },
        };
        let info: ModelInfo = backend.call("/v1/info", None)?;
        if info.protocol != PROTOCOL_VERSION {
            return Err(BackendError::Protocol(format!(
                "server speaks protocol {}, client expects {PROTOCOL_VERSION}",
                info.protocol
            )));
        }
        if info.dim == 0 {
            return Err(BackendError::Malformed("server reports dim 0".into()));
        }
        backend.info = info;
        Ok(backend)
    }

    pub fn info(&self) -> &ModelInfo {
        &self.info
    }

    pub fn config(&self) -> &RemoteBackendConfig {
        &self.cfg
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn map_transport(&self, err: ureq::Transport) -> BackendError {
        let timed_out = std::error::Error::source(&err)
            .and_then(|s| s.downcast_ref::<io::Error>())
            .is_some_and(|e| {
                matches!(
                    e.kind(),
                    io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock
                )
            })
            || err.to_string().contains("timed out");
        if timed_out {
            BackendError::Timeout {
                endpoint: self.base.clone(),
            }
        } else {
            BackendError::Transport(err.to_string())
        }
    }

    fn call<T: DeserializeOwned>(
        &self,
        path: &str,
        body: Option<String>,
    ) -> Result<T, BackendError> {
        let _permit = self.gate.acquire();
        let url = self.url(path);
        let result = match body {
            None => self.agent.get(&url).call(),
            Some(body) => self
                .agent
                .post(&url)
                .set("Content-Type", "application/json")
                .send_string(&body),
        };
        let response = match result {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                let text = r.into_string().unwrap_or_default();
                let message = serde_json::from_str::<ErrorBody>(&text)
                    .map(|e| e.error)
                    .unwrap_or(text);
                return Err(BackendError::Server { status, message });
            }
            Err(ureq::Error::Transport(t)) => return Err(self.map_transport(t)),
        };
        let text = response.into_string().map_err(|e| {
            if matches!(
                e.kind(),
                io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock
            ) {
                BackendError::Timeout {
                    endpoint: self.base.clone(),
                }
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        serde_json::from_str(&text).map_err(|e| BackendError::Malformed(format!("{path}: {e}")))
    }

    fn check_len(&self, n: usize) -> Result<(), BackendError> {
        if self.info.max_tokens > 0 && n > self.info.max_tokens {
            return Err(BackendError::TooManyTokens {
                count: n,
                max: self.info.max_tokens,
            });
        }
        Ok(())
    }

    fn to_embedded(
        &self,
        resp: EmbedResponse,
        n_tokens: usize,
    ) -> Result<EmbeddedText, BackendError> {
        let dim = self.info.dim;
        if resp.dim != dim {
            return Err(BackendError::DimensionMismatch {
                expected: dim,
                got: resp.dim,
            });
        }
        if resp.vectors.len() != n_tokens {
            return Err(BackendError::Malformed(format!(
                "expected {n_tokens} vectors, got {}",
                resp.vectors.len()
            )));
        }
        if let Some(s) = &resp.sentence_vector {
            if s.len() != dim {
                return Err(BackendError::DimensionMismatch {
                    expected: dim,
                    got: s.len(),
                });
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(BackendError::Malformed("non-finite sentence vector".into()));
            }
        }
        Ok(EmbeddedText {
            tokens: Embeddings::from_rows(dim, resp.vectors)?,
            sentence: resp.sentence_vector,
        })
    }

    fn checked_prob(resp: TokenProbResponse) -> Result<f64, BackendError> {
        if !resp.prob.is_finite() || resp.prob < 0.0 {
            return Err(BackendError::Malformed(format!(
                "probability {} outside [0, 1]",
                resp.prob
            )));
        }
        Ok(resp.prob)
    }

    fn batch<Req: Serialize>(&self, requests: Vec<Req>) -> Result<Vec<Value>, BackendError> {
        let n = requests.len();
        let body = serde_json::to_string(&BatchRequest { requests })
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let resp: BatchResponse = self.call("/v1/batch", Some(body))?;
        if resp.responses.len() != n {
            return Err(BackendError::Malformed(format!(
                "batch of {n} answered with {} responses",
                resp.responses.len()
            )));
        }
        Ok(resp.responses)
    }
}

fn from_item<T: DeserializeOwned>(i: usize, v: Value) -> Result<T, BackendError> {
    if let Some(err) = v.get("error").and_then(Value::as_str) {
        return Err(BackendError::Malformed(format!("batch item {i}: {err}")));
    }
    serde_json::from_value(v).map_err(|e| BackendError::Malformed(format!("batch item {i}: {e}")))
}

impl EmbeddingProvider for RemoteBackend {
    fn dim(&self) -> usize {
        self.info.dim
    }

    fn embed(&self, seq: &TokenSequence) -> Result<EmbeddedText, BackendError> {
        if seq.is_empty() {
            return Ok(EmbeddedText {
                tokens: Embeddings::from_rows(self.info.dim, Vec::new())?,
                sentence: None,
            });
        }
        self.check_len(seq.len())?;
        let body = serde_json::to_string(&EmbedRequest {
            tokens: seq.texts(),
        })
        .map_err(|e| BackendError::Transport(e.to_string()))?;
        let resp: EmbedResponse = self.call("/v1/embed", Some(body))?;
        self.to_embedded(resp, seq.len())
    }

    fn embed_batch(&self, seqs: &[&TokenSequence]) -> Result<Vec<EmbeddedText>, BackendError> {
        if seqs.len() <= 1 || self.cfg.max_batch == 1 {
            return seqs.iter().map(|s| self.embed(s)).collect();
        }
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(self.cfg.max_batch) {
            for s in chunk {
                self.check_len(s.len())?;
            }
            let requests = chunk
                .iter()
                .map(|s| EmbedRequest { tokens: s.texts() })
                .collect();
            for (i, (item, seq)) in self.batch(requests)?.into_iter().zip(chunk).enumerate() {
                let resp: EmbedResponse = from_item(i, item)?;
                out.push(self.to_embedded(resp, seq.len())?);
            }
        }
        Ok(out)
    }
}

impl MaskedLmProvider for RemoteBackend {
    fn token_probability(&self, q: &MaskedQuery<'_>) -> Result<f64, BackendError> {
        self.check_len(q.tokens().len())?;
        let body = serde_json::to_string(&TokenProbRequest {
            tokens: q.tokens().texts(),
            index: q.target_index(),
        })
        .map_err(|e| BackendError::Transport(e.to_string()))?;
        Self::checked_prob(self.call("/v1/token_prob", Some(body))?)
    }

    fn token_probabilities(&self, qs: &[MaskedQuery<'_>]) -> Result<Vec<f64>, BackendError> {
        if qs.len() <= 1 || self.cfg.max_batch == 1 {
            return qs.iter().map(|q| self.token_probability(q)).collect();
        }
        let mut out = Vec::with_capacity(qs.len());
        for chunk in qs.chunks(self.cfg.max_batch) {
            for q in chunk {
                self.check_len(q.tokens().len())?;
            }
            let requests = chunk
                .iter()
                .map(|q| TokenProbRequest {
                    tokens: q.tokens().texts(),
                    index: q.target_index(),
                })
                .collect();
            for (i, item) in self.batch(requests)?.into_iter().enumerate() {
                out.push(Self::checked_prob(from_item(i, item)?)?);
            }
        }
        Ok(out)
    }
}
