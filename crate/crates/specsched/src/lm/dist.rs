//! Validated next-token distributions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::rng::RngStream;

/// Index of a token in a model's vocabulary.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u32> for TokenId {
    fn from(v: u32) -> Self {
        TokenId(v)
    }
}

impl std::fmt::Display for TokenId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// A probability vector over a vocabulary.
///
/// Construction validates that every entry is finite and non-negative and
/// that the entries sum to 1 within [`Distribution::SUM_TOLERANCE`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Maximum allowed deviation of the entry sum from 1.
    pub const SUM_TOLERANCE: f64 = 1e-9;

    /// Validates `probs` as a probability vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty vector".into()));
        }
        let mut sum = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "entry {i} is {p}, expected a finite non-negative value"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {sum}, expected 1 within {}",
                Self::SUM_TOLERANCE
            )));
        }
        Ok(Distribution { probs })
    }

    /// Normalizes a vector of non-negative weights into a distribution.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty vector".into()));
        }
        let mut sum = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "weight {i} is {w}, expected a finite non-negative value"
                )));
            }
            sum += w;
        }
        if sum <= 0.0 {
            return Err(Error::DegenerateDistribution);
        }
        let probs = weights.into_iter().map(|w| w / sum).collect();
        Ok(Distribution { probs })
    }

    /// The uniform distribution over `vocab` tokens.
    pub fn uniform(vocab: usize) -> Result<Self> {
        if vocab == 0 {
            return Err(Error::InvalidDistribution("empty vocabulary".into()));
        }
        Ok(Distribution {
            probs: vec![1.0 / vocab as f64; vocab],
        })
    }

    /// All mass on a single token.
    pub fn point_mass(vocab: usize, token: TokenId) -> Result<Self> {
        if token.index() >= vocab {
            return Err(Error::TokenOutOfRange {
                token: token.0,
                vocab,
            });
        }
        let mut probs = vec![0.0; vocab];
        probs[token.index()] = 1.0;
        Ok(Distribution { probs })
    }

    /// Vocabulary size.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability of one token.
    pub fn prob(&self, token: TokenId) -> f64 {
        self.probs[token.index()]
    }

    /// The full probability vector.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Number of tokens with strictly positive probability.
    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }

    /// Draws one token, consuming exactly one uniform from `rng`.
    pub fn sample(&self, rng: &mut RngStream) -> Result<TokenId> {
        let u = rng.next_f64();
        sample_index_from_masses(&self.probs, u)
            .map(|i| TokenId(i as u32))
            .ok_or(Error::DegenerateDistribution)
    }

    /// Rescales the distribution by exponent `1 / temperature` and
    /// renormalizes. A temperature of exactly `1.0` returns the distribution
    /// unchanged (bit-for-bit); other values must be finite and positive.
    pub fn apply_temperature(&self, temperature: f64) -> Result<Self> {
        if temperature == 1.0 {
            return Ok(self.clone());
        }
        if !temperature.is_finite() || temperature <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "temperature must be finite and positive, got {temperature}"
            )));
        }
        let inv = 1.0 / temperature;
        let weights = self.probs.iter().map(|&p| p.powf(inv)).collect();
        Distribution::from_weights(weights)
    }

    /// Total-variation distance to another distribution of the same size.
    pub fn tv_distance(&self, other: &Distribution) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::VocabMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        let sum: f64 = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(0.5 * sum)
    }
}

/// Inverse-CDF selection of an index from a vector of non-negative masses.
///
/// The uniform `u` in `[0, 1)` is scaled by the total mass, so the input does
/// not need to be normalized. Returns `None` when the total mass is zero.
/// Every caller that must stay bit-compatible with another sampling site
/// (chain vs. tree verification, isolated vs. scheduled execution) funnels
/// through this one function.
pub(crate) fn sample_index_from_masses(masses: &[f64], u: f64) -> Option<usize> {
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let threshold = u * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &m) in masses.iter().enumerate() {
        if m > 0.0 {
            acc += m;
            last_positive = Some(i);
            if threshold < acc {
                return Some(i);
            }
        }
    }
    // Rounding in the partial sums can leave `threshold` marginally above the
    // final accumulator; fall back to the last token with positive mass.
    last_positive
}
