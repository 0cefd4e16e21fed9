//! Semantic-consistency scoring between an original text and a generated test case.
//!
//! The generated text is aligned against the original. Around every mutated
//! position a small window of tokens (a patch) is taken from each side, and
//! the mean-pooled patch vectors are compared by cosine. The weakest patch, the
//! average patch and the whole-text similarity are then blended:
//!
//! ```text
//! value = lambda1 * min_sim + lambda2 * avg_sim + (1 - lambda1 - lambda2) * text_sim
//! ```
//!
//! Cosines are clamped at 0 so every component stays in `[0, 1]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{levenshtein_align, mutated_pairs};
use crate::backends::{BackendError, EmbeddingProvider, Embeddings};
use crate::text::TextPair;

pub const DEFAULT_LAMBDA1: f64 = 0.1;
pub const DEFAULT_LAMBDA2: f64 = 0.2;
pub const DEFAULT_RADIUS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemError {
    #[error("degenerate embedding")]
    DegenerateEmbedding,
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("patch centre {center} out of range for {len} tokens")]
    CenterOutOfRange { center: usize, len: usize },
    #[error("empty test case")]
    EmptyTestCase,
    #[error("empty original text")]
    EmptyOriginal,
    #[error(
        "weights must satisfy lambda1, lambda2 >= 0 and lambda1 + lambda2 <= 1 (got {0}, {1})"
    )]
    InvalidWeights(f64, f64),
    #[error("embedding provider failed: {0}")]
    Provider(#[from] BackendError),
}

/// Cosine similarity clamped to `[0, 1]`.
pub fn cosine_unit(a: &[f64], b: &[f64]) -> Result<f64, SemError> {
    if a.len() != b.len() {
        return Err(SemError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    // sqrt(aa * bb) rather than sqrt(aa) * sqrt(bb): exact 1.0 when a == b
    let denom = (aa * bb).sqrt();
    if denom <= 0.0 || !denom.is_finite() {
        return Err(SemError::DegenerateEmbedding);
    }
    Ok((dot / denom).clamp(0.0, 1.0))
}

/// Inclusive token window around a mutated position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub center: usize,
    pub lo: usize,
    pub hi: usize,
}

impl Patch {
    /// Number of tokens in the window.
    pub fn width(&self) -> usize {
        self.hi - self.lo + 1
    }
}

/// Window `[center - radius, center + radius]`. Near the start it becomes the
/// first `radius + 1` tokens, near the end the last `radius + 1` tokens; a
/// sequence shorter than that yields the whole sequence.
pub fn extract_patch(seq_len: usize, center: usize, radius: usize) -> Result<Patch, SemError> {
    if center >= seq_len {
        return Err(SemError::CenterOutOfRange {
            center,
            len: seq_len,
        });
    }
    let last = seq_len - 1;
    let (lo, hi) = if center < radius {
        (0, radius.min(last))
    } else if center + radius > last {
        (last.saturating_sub(radius), last)
    } else {
        (center - radius, center + radius)
    };
    Ok(Patch { center, lo, hi })
}

/// Cosine of the mean-pooled rows of each patch.
pub fn patch_similarity(
    emb_a: &Embeddings,
    emb_b: &Embeddings,
    pa: Patch,
    pb: Patch,
) -> Result<f64, SemError> {
    if pa.hi >= emb_a.n_rows() {
        return Err(SemError::CenterOutOfRange {
            center: pa.center,
            len: emb_a.n_rows(),
        });
    }
    if pb.hi >= emb_b.n_rows() {
        return Err(SemError::CenterOutOfRange {
            center: pb.center,
            len: emb_b.n_rows(),
        });
    }
    cosine_unit(
        &emb_a.mean_pool(pa.lo, pa.hi),
        &emb_b.mean_pool(pb.lo, pb.hi),
    )
}

/// Decomposed semantic score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemScore {
    pub value: f64,
    pub min_sim: f64,
    pub avg_sim: f64,
    pub text_sim: f64,
    pub patch_sims: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
}

pub fn validate_weights(lambda1: f64, lambda2: f64) -> Result<(), SemError> {
    let ok = lambda1 >= 0.0 && lambda2 >= 0.0 && lambda1 + lambda2 <= 1.0;
    if ok {
        Ok(())
    } else {
        Err(SemError::InvalidWeights(lambda1, lambda2))
    }
}

/// Blends the three components, then holds the result inside the range the
/// components span so rounding can never push it out.
pub fn combine_semantic(
    min_sim: f64,
    avg_sim: f64,
    text_sim: f64,
    lambda1: f64,
    lambda2: f64,
) -> f64 {
    let v = lambda1 * min_sim + lambda2 * avg_sim + (1.0 - lambda1 - lambda2) * text_sim;
    let lo = min_sim.min(avg_sim).min(text_sim);
    let hi = min_sim.max(avg_sim).max(text_sim);
    v.clamp(lo, hi)
}

/// Scoring knobs for [`sem_score`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub radius: usize,
}

impl Default for SemParams {
    fn default() -> Self {
        Self {
            lambda1: DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
            radius: DEFAULT_RADIUS,
        }
    }
}

pub fn sem_score<P: EmbeddingProvider + ?Sized>(
    pair: &TextPair,
    provider: &P,
    params: SemParams,
) -> Result<SemScore, SemError> {
    let SemParams {
        lambda1,
        lambda2,
        radius,
    } = params;
    validate_weights(lambda1, lambda2)?;
    if pair.generated.is_empty() {
        return Err(SemError::EmptyTestCase);
    }
    if pair.original.is_empty() {
        return Err(SemError::EmptyOriginal);
    }

    let alignment = levenshtein_align(&pair.original, &pair.generated);
    let pairs = mutated_pairs(&alignment);

    let mut embedded = provider.embed_batch(&[&pair.original, &pair.generated])?;
    if embedded.len() != 2 {
        return Err(BackendError::Malformed(format!(
            "expected 2 embeddings, got {}",
            embedded.len()
        ))
        .into());
    }
    let gen = embedded.pop().unwrap();
    let orig = embedded.pop().unwrap();
    for (e, seq) in [(&orig, &pair.original), (&gen, &pair.generated)] {
        if e.tokens.n_rows() != seq.len() {
            return Err(BackendError::Malformed(format!(
                "expected {} embedding rows, got {}",
                seq.len(),
                e.tokens.n_rows()
            ))
            .into());
        }
    }

    let text_sim = match (&orig.sentence, &gen.sentence) {
        (Some(a), Some(b)) => cosine_unit(a, b)?,
        _ => cosine_unit(&orig.tokens.mean_all(), &gen.tokens.mean_all())?,
    };

    let patch_sims = pairs
        .iter()
        .map(|&(src, dst)| {
            let pa = extract_patch(pair.original.len(), src, radius)?;
            let pb = extract_patch(pair.generated.len(), dst, radius)?;
            patch_similarity(&orig.tokens, &gen.tokens, pa, pb)
        })
        .collect::<Result<Vec<f64>, SemError>>()?;

    if patch_sims.is_empty() {
        return Ok(SemScore {
            value: text_sim,
            min_sim: text_sim,
            avg_sim: text_sim,
            text_sim,
            patch_sims,
            lambda1,
            lambda2,
        });
    }

    let min_sim = patch_sims.iter().copied().fold(f64::INFINITY, f64::min);
    let max_sim = patch_sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let avg_sim =
        (patch_sims.iter().sum::<f64>() / patch_sims.len() as f64).clamp(min_sim, max_sim);
    Ok(SemScore {
        value: combine_semantic(min_sim, avg_sim, text_sim, lambda1, lambda2),
        min_sim,
        avg_sim,
        text_sim,
        patch_sims,
        lambda1,
        lambda2,
    })
}
