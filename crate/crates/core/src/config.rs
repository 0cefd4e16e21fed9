//! Run configuration, echoed verbatim into every scored line.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{QualityThresholds, RankKey};
use crate::semeval::{self, SemParams, DEFAULT_LAMBDA1, DEFAULT_LAMBDA2, DEFAULT_RADIUS};
use crate::syneval::{Aggregation, DEFAULT_PHI};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error(transparent)]
    Weights(#[from] semeval::SemError),
    #[error("phi must lie in [0, 1], got {0}")]
    Phi(f64),
    #[error("threshold {name} must lie in [0, 1], got {value}")]
    Threshold { name: &'static str, value: f64 },
}

/// Which provider produced the scores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendDescriptor {
    Reference {
        seed: u64,
        dim: usize,
    },
    Remote {
        endpoint: String,
        model: String,
        dim: usize,
    },
}

impl Default for BackendDescriptor {
    fn default() -> Self {
        Self::Reference { seed: 42, dim: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub phi: f64,
    pub patch_radius: usize,
    pub aggregation: Aggregation,
    pub thresholds: QualityThresholds,
    pub rank_key: RankKey,
    pub backend: BackendDescriptor,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lambda1: DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
            phi: DEFAULT_PHI,
            patch_radius: DEFAULT_RADIUS,
            aggregation: Aggregation::Arithmetic,
            thresholds: QualityThresholds::default(),
            rank_key: RankKey::Mean,
            backend: BackendDescriptor::default(),
        }
    }
}

impl RunConfig {
    pub fn sem_params(&self) -> SemParams {
        SemParams {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            radius: self.patch_radius,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        semeval::validate_weights(self.lambda1, self.lambda2)?;
        if !(0.0..=1.0).contains(&self.phi) {
            return Err(ConfigError::Phi(self.phi));
        }
        self.thresholds.validate()
    }
}
