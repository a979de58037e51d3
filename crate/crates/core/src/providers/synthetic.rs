//! Parametric score models for simulation.
//!
//! A synthetic generator is a pure function of `(source.seed, producer_id)`:
//! every method that asks for the same producer on the same source sees the
//! same draw, which is what makes cross-method comparisons paired.
//!
//! Correlation with baseline A goes through a shared standard-normal latent
//! `z0` drawn from `source.seed` alone. Baseline A uses `z0` directly; any
//! other producer uses `rho * z0 + sqrt(1 - rho^2) * e` with its own `e`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Attempted, Generator, ProviderError, SourceItem};
use crate::engine::Candidate;
use crate::seed::{fnv1a64, splitmix64, LATENT_STREAM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Gaussian,
    /// Uniform with the given mean and standard deviation (half-width `sqrt(3) * stddev`).
    Uniform,
    Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticScoreModel {
    pub mean: f64,
    #[serde(default)]
    pub stddev: f64,
    pub distribution: Distribution,
    #[serde(default)]
    pub correlation_with_baseline: f64,
}

impl SyntheticScoreModel {
    pub fn point(mean: f64) -> Self {
        Self {
            mean,
            stddev: 0.0,
            distribution: Distribution::Point,
            correlation_with_baseline: 0.0,
        }
    }

    pub fn gaussian(mean: f64, stddev: f64) -> Self {
        Self {
            mean,
            stddev,
            distribution: Distribution::Gaussian,
            correlation_with_baseline: 0.0,
        }
    }

    pub fn with_correlation(mut self, rho: f64) -> Self {
        self.correlation_with_baseline = rho;
        self
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let bad = |m: String| Err(ProviderError::InvalidConfig(m));
        if !self.mean.is_finite() {
            return bad(format!("mean must be finite, got {}", self.mean));
        }
        if !(self.stddev.is_finite() && self.stddev >= 0.0) {
            return bad(format!("stddev must be >= 0, got {}", self.stddev));
        }
        if self.distribution == Distribution::Point && self.stddev != 0.0 {
            return bad("point distribution requires stddev == 0".into());
        }
        let rho = self.correlation_with_baseline;
        if !(rho.is_finite() && (-1.0..=1.0).contains(&rho)) {
            return bad(format!("correlation_with_baseline must be in [-1, 1], got {rho}"));
        }
        Ok(())
    }

    /// Maps a standard-normal latent to a score.
    pub fn score_from_latent(&self, z: f64) -> f64 {
        match self.distribution {
            Distribution::Point => self.mean,
            Distribution::Gaussian => self.mean + self.stddev * z,
            Distribution::Uniform => {
                let u = 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2);
                self.mean + self.stddev * 3f64.sqrt() * (2.0 * u - 1.0)
            }
        }
    }
}

fn standard_normal(seed: u64) -> f64 {
    ChaCha8Rng::seed_from_u64(seed).sample(StandardNormal)
}

/// Shared latent of a source item.
pub fn baseline_latent(source_seed: u64) -> f64 {
    standard_normal(splitmix64(source_seed ^ LATENT_STREAM))
}

#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    producer_id: String,
    model: SyntheticScoreModel,
    anchor: bool,
    stream: u64,
}

impl SyntheticGenerator {
    /// `anchor` is set for baseline A, whose draw is the shared latent itself.
    pub fn new(producer_id: String, model: SyntheticScoreModel, anchor: bool) -> Result<Self, ProviderError> {
        model.validate()?;
        let stream = fnv1a64(producer_id.as_bytes());
        Ok(Self {
            producer_id,
            model,
            anchor,
            stream,
        })
    }

    pub fn latent(&self, source_seed: u64) -> f64 {
        let shared = baseline_latent(source_seed);
        if self.anchor {
            return shared;
        }
        let rho = self.model.correlation_with_baseline;
        let own = standard_normal(splitmix64(source_seed ^ self.stream));
        if rho == 0.0 {
            own
        } else {
            rho * shared + (1.0 - rho * rho).sqrt() * own
        }
    }

    pub fn draw(&self, source_seed: u64) -> f64 {
        self.model.score_from_latent(self.latent(source_seed))
    }
}

impl Generator for SyntheticGenerator {
    fn producer_id(&self) -> &str {
        &self.producer_id
    }

    fn generate(&self, source: &SourceItem) -> Result<Attempted<Candidate>, ProviderError> {
        let score = self.draw(source.seed);
        let text = format!("[{}:{}]", self.producer_id, source.source_id);
        Ok(Attempted::once(Candidate::new(self.producer_id.clone(), text).with_score(score)))
    }
}
