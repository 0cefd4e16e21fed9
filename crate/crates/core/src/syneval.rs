//! Naturalness scoring from masked-token probabilities.
//!
//! Each token of the generated text is masked in turn and the masked LM is
//! asked how likely the original token is at that slot. The score blends the
//! weakest token with the typical one:
//!
//! ```text
//! value = phi * min(p) + (1 - phi) * mean(p)
//! ```
//!
//! `mean` is arithmetic by default; the geometric mean is the reciprocal of the
//! pseudo-perplexity `(prod 1/p_i)^(1/N)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, MaskedLmProvider};
use crate::text::TokenSequence;

/// Smallest probability a token may be assigned.
pub const PROB_FLOOR: f64 = 1e-12;

pub const DEFAULT_PHI: f64 = 0.6;

pub const MASK_TOKEN: &str = "[MASK]";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NatError {
    #[error("empty test case")]
    EmptyTestCase,
    #[error("mask index {index} out of range for {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("phi must lie in [0, 1], got {0}")]
    InvalidPhi(f64),
    #[error("probability list is empty")]
    EmptyProbabilities,
    #[error("probability {0} outside (0, 1]")]
    InvalidProbability(f64),
    #[error("masked query at token {index} ({target:?}) failed: {source}")]
    Provider {
        index: usize,
        target: String,
        #[source]
        source: BackendError,
    },
    #[error("provider failed on a batch of masked queries: {0}")]
    Batch(#[source] BackendError),
    #[error("provider returned {got} probabilities for {expected} queries")]
    CountMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Arithmetic,
    Geometric,
}

impl std::str::FromStr for Aggregation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "arithmetic" => Ok(Self::Arithmetic),
            "geometric" => Ok(Self::Geometric),
            other => Err(format!("unknown aggregation {other:?}")),
        }
    }
}

/// A sequence with one position designated as masked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskedQuery<'a> {
    tokens: &'a TokenSequence,
    target_index: usize,
}

impl<'a> MaskedQuery<'a> {
    /// The unmasked sequence.
    pub fn tokens(&self) -> &'a TokenSequence {
        self.tokens
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn target_text(&self) -> &'a str {
        &self.tokens.tokens()[self.target_index].text
    }

    /// Token texts with the target replaced by [`MASK_TOKEN`].
    pub fn masked_texts(&self) -> Vec<&'a str> {
        self.tokens
            .tokens()
            .iter()
            .map(|t| {
                if t.index == self.target_index {
                    MASK_TOKEN
                } else {
                    t.text.as_str()
                }
            })
            .collect()
    }
}

pub fn mask_at(seq: &TokenSequence, index: usize) -> Result<MaskedQuery<'_>, NatError> {
    if index >= seq.len() {
        return Err(NatError::IndexOutOfRange {
            index,
            len: seq.len(),
        });
    }
    Ok(MaskedQuery {
        tokens: seq,
        target_index: index,
    })
}

fn floor_cap(p: f64) -> f64 {
    if p.is_nan() {
        PROB_FLOOR
    } else {
        p.clamp(PROB_FLOOR, 1.0)
    }
}

/// Provider probability for the masked target, floored at [`PROB_FLOOR`] and capped at 1.
pub fn token_probability<P: MaskedLmProvider + ?Sized>(
    provider: &P,
    q: &MaskedQuery<'_>,
) -> Result<f64, NatError> {
    provider
        .token_probability(q)
        .map(floor_cap)
        .map_err(|source| NatError::Provider {
            index: q.target_index,
            target: q.target_text().to_string(),
            source,
        })
}

/// Decomposed naturalness score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NatScore {
    pub value: f64,
    pub min_nat: f64,
    pub avg_nat: f64,
    pub token_probs: Vec<f64>,
    pub phi: f64,
    pub aggregation: Aggregation,
}

fn validate_probs(probs: &[f64]) -> Result<(), NatError> {
    if probs.is_empty() {
        return Err(NatError::EmptyProbabilities);
    }
    match probs.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        Some(&p) => Err(NatError::InvalidProbability(p)),
        None => Ok(()),
    }
}

/// `(prod 1/p_i)^(1/N)`, computed in log space.
pub fn pseudo_perplexity(probs: &[f64]) -> Result<f64, NatError> {
    validate_probs(probs)?;
    let mean_log = probs.iter().map(|p| p.ln()).sum::<f64>() / probs.len() as f64;
    Ok((-mean_log).exp().max(1.0))
}

pub fn geometric_mean(probs: &[f64]) -> Result<f64, NatError> {
    validate_probs(probs)?;
    let mean_log = probs.iter().map(|p| p.ln()).sum::<f64>() / probs.len() as f64;
    Ok(bounded(mean_log.exp(), probs))
}

fn bounded(v: f64, probs: &[f64]) -> f64 {
    let lo = probs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.clamp(lo, hi)
}

/// `phi * min + (1 - phi) * avg`, evaluated as `avg - phi * (avg - min)` so the
/// result is non-increasing in `phi` under rounding, then held to `[min, avg]`.
pub fn combine_naturalness(min_nat: f64, avg_nat: f64, phi: f64) -> f64 {
    let v = avg_nat - phi * (avg_nat - min_nat);
    v.clamp(min_nat.min(avg_nat), avg_nat.max(min_nat))
}

/// Builds a [`NatScore`] from already-collected token probabilities.
pub fn nat_from_probs(
    token_probs: Vec<f64>,
    phi: f64,
    aggregation: Aggregation,
) -> Result<NatScore, NatError> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(NatError::InvalidPhi(phi));
    }
    validate_probs(&token_probs)?;
    let min_nat = token_probs.iter().copied().fold(f64::INFINITY, f64::min);
    let avg_nat = match aggregation {
        Aggregation::Arithmetic => bounded(
            token_probs.iter().sum::<f64>() / token_probs.len() as f64,
            &token_probs,
        ),
        Aggregation::Geometric => geometric_mean(&token_probs)?,
    };
    Ok(NatScore {
        value: combine_naturalness(min_nat, avg_nat, phi),
        min_nat,
        avg_nat,
        token_probs,
        phi,
        aggregation,
    })
}

/// Masks every token once and scores the sequence.
pub fn nat_score<P: MaskedLmProvider + ?Sized>(
    seq: &TokenSequence,
    provider: &P,
    phi: f64,
    aggregation: Aggregation,
) -> Result<NatScore, NatError> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(NatError::InvalidPhi(phi));
    }
    if seq.is_empty() {
        return Err(NatError::EmptyTestCase);
    }
    let queries: Vec<MaskedQuery<'_>> = (0..seq.len())
        .map(|i| MaskedQuery {
            tokens: seq,
            target_index: i,
        })
        .collect();
    let raw = provider
        .token_probabilities(&queries)
        .map_err(NatError::Batch)?;
    if raw.len() != queries.len() {
        return Err(NatError::CountMismatch {
            expected: queries.len(),
            got: raw.len(),
        });
    }
    nat_from_probs(raw.into_iter().map(floor_cap).collect(), phi, aggregation)
}
