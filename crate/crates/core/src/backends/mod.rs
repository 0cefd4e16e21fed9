//! Provider contracts for token embeddings and masked-token probabilities.
//!
//! Scorers see models only through [`EmbeddingProvider`] and
//! [`MaskedLmProvider`]. Two implementations ship here: a deterministic,
//! context-free [`ReferenceBackend`] for tests and reproducible runs, and a
//! [`RemoteBackend`] that talks JSON over HTTP to a model server.

mod reference;
mod remote;

pub use reference::{fnv1a64, ReferenceBackend, ReferenceBackendConfig, SplitMix64};
pub use remote::{ModelInfo, RemoteBackend, RemoteBackendConfig, PROTOCOL_VERSION};

use thiserror::Error;

use crate::syneval::MaskedQuery;
use crate::text::TokenSequence;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("request to {endpoint} timed out")]
    Timeout { endpoint: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("server error {status}: {message}")]
    Server { status: u16, message: String },
    #[error("protocol mismatch: {0}")]
    Protocol(String),
    #[error("sequence of {count} tokens exceeds the server limit of {max}")]
    TooManyTokens { count: usize, max: usize },
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

/// Row-major matrix with one row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    dim: usize,
    data: Vec<f64>,
}

impl Embeddings {
    /// Builds a matrix from rows, checking that every row has `dim` finite values.
    pub fn from_rows(dim: usize, rows: Vec<Vec<f64>>) -> Result<Self, BackendError> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(BackendError::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(BackendError::Malformed("non-finite embedding value".into()));
            }
            data.extend(row);
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    /// Mean of rows `lo..=hi`. An empty range yields the zero vector.
    pub fn mean_pool(&self, lo: usize, hi: usize) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        if hi < lo {
            return acc;
        }
        for i in lo..=hi {
            for (a, v) in acc.iter_mut().zip(self.row(i)) {
                *a += v;
            }
        }
        let n = (hi - lo + 1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Mean of all rows.
    pub fn mean_all(&self) -> Vec<f64> {
        match self.n_rows() {
            0 => vec![0.0; self.dim],
            n => self.mean_pool(0, n - 1),
        }
    }
}

/// Embeddings for one token sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedText {
    pub tokens: Embeddings,
    /// Dedicated sentence vector, when the provider has one.
    pub sentence: Option<Vec<f64>>,
}

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    /// One row per token plus an optional sentence vector.
    fn embed(&self, seq: &TokenSequence) -> Result<EmbeddedText, BackendError>;

    fn embed_batch(&self, seqs: &[&TokenSequence]) -> Result<Vec<EmbeddedText>, BackendError> {
        seqs.iter().map(|s| self.embed(s)).collect()
    }
}

pub trait MaskedLmProvider: Send + Sync {
    /// Probability of `q.target_text` at the masked slot, as the model reports it.
    fn token_probability(&self, q: &MaskedQuery<'_>) -> Result<f64, BackendError>;

    /// Answers must come back in query order.
    fn token_probabilities(&self, qs: &[MaskedQuery<'_>]) -> Result<Vec<f64>, BackendError> {
        qs.iter().map(|q| self.token_probability(q)).collect()
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, seq: &TokenSequence) -> Result<EmbeddedText, BackendError> {
        (**self).embed(seq)
    }
    fn embed_batch(&self, seqs: &[&TokenSequence]) -> Result<Vec<EmbeddedText>, BackendError> {
        (**self).embed_batch(seqs)
    }
}

impl<P: MaskedLmProvider + ?Sized> MaskedLmProvider for &P {
    fn token_probability(&self, q: &MaskedQuery<'_>) -> Result<f64, BackendError> {
        (**self).token_probability(q)
    }
    fn token_probabilities(&self, qs: &[MaskedQuery<'_>]) -> Result<Vec<f64>, BackendError> {
        (**self).token_probabilities(qs)
    }
}
