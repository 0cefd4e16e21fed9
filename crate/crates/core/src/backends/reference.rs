//! Deterministic, context-free test double for both provider contracts.
//!
//! A token's vector depends only on its UTF-8 bytes and the seed:
//! `h = fnv1a64(bytes) ^ seed`, then `dim` draws `u` from a SplitMix64 stream
//! seeded with `h`, each mapped to `u / 2^63 - 1`, then L2-normalised.
//!
//! Masked-token probability is `(1 + cos(c, v)) / 2` where `c` is the mean
//! vector of the unmasked tokens and `v` the vector of the target token.

use serde::{Deserialize, Serialize};

use super::{BackendError, EmbeddedText, EmbeddingProvider, Embeddings, MaskedLmProvider};
use crate::syneval::{MaskedQuery, PROB_FLOOR};
use crate::text::TokenSequence;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceBackendConfig {
    pub dim: usize,
    pub seed: u64,
}

impl Default for ReferenceBackendConfig {
    fn default() -> Self {
        Self { dim: 64, seed: 42 }
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceBackend {
    cfg: ReferenceBackendConfig,
}

impl ReferenceBackend {
    pub fn new(cfg: ReferenceBackendConfig) -> Result<Self, BackendError> {
        if cfg.dim < 2 {
            return Err(BackendError::Config(format!(
                "reference backend dim must be at least 2, got {}",
                cfg.dim
            )));
        }
        Ok(Self { cfg })
    }

    pub fn config(&self) -> ReferenceBackendConfig {
        self.cfg
    }

    /// Unit vector for a single token.
    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut rng = SplitMix64::new(fnv1a64(token.as_bytes()) ^ self.cfg.seed);
        let scale = 2f64.powi(63);
        let mut v: Vec<f64> = (0..self.cfg.dim)
            .map(|_| rng.next_u64() as f64 / scale - 1.0)
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    pub fn token_embeddings(&self, seq: &TokenSequence) -> Embeddings {
        let rows = seq
            .tokens()
            .iter()
            .map(|t| self.token_vector(&t.text))
            .collect();
        Embeddings::from_rows(self.cfg.dim, rows).expect("reference vectors are well-formed")
    }
}

fn raw_cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    let denom = (aa * bb).sqrt();
    (denom > 0.0).then(|| dot / denom)
}

impl EmbeddingProvider for ReferenceBackend {
    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn embed(&self, seq: &TokenSequence) -> Result<EmbeddedText, BackendError> {
        Ok(EmbeddedText {
            tokens: self.token_embeddings(seq),
            sentence: None,
        })
    }
}

impl MaskedLmProvider for ReferenceBackend {
    fn token_probability(&self, q: &MaskedQuery<'_>) -> Result<f64, BackendError> {
        let seq = q.tokens();
        if seq.len() == 1 {
            return Ok(0.5);
        }
        let mut context = vec![0.0; self.cfg.dim];
        for t in seq.tokens().iter().filter(|t| t.index != q.target_index()) {
            for (c, x) in context.iter_mut().zip(self.token_vector(&t.text)) {
                *c += x;
            }
        }
        let n = (seq.len() - 1) as f64;
        context.iter_mut().for_each(|c| *c /= n);
        let target = self.token_vector(q.target_text());
        Ok(match raw_cosine(&context, &target) {
            Some(cos) => ((1.0 + cos) / 2.0).clamp(PROB_FLOOR, 1.0),
            None => 0.5,
        })
    }
}
