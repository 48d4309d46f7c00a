use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target ratios `alpha` of each user's rate to the common rate. Stored
/// normalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateProfile {
    alpha: Vec<f64>,
}

impl RateProfile {
    /// Normalizes `weights`; rejects negative, non-finite or all-zero input.
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidConfig("rate profile is empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "rate profile entries must be finite and non-negative: {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidConfig("rate profile has no positive entry".into()));
        }
        Ok(Self { alpha: weights.iter().map(|w| w / total).collect() })
    }

    /// Two-user profile `(a, 1 - a)`.
    pub fn two_user(a: f64) -> Result<Self> {
        Self::new(&[a, 1.0 - a])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn users(&self) -> usize {
        self.alpha.len()
    }

    /// Users with a positive target.
    pub fn active(&self) -> Vec<usize> {
        (0..self.alpha.len()).filter(|&k| self.alpha[k] > 0.0).collect()
    }

    /// Largest `R` with `rates[k] >= alpha_k R` for every active user.
    pub fn common_rate(&self, rates: &[f64]) -> f64 {
        self.active()
            .iter()
            .map(|&k| rates[k] / self.alpha[k])
            .fold(f64::INFINITY, f64::min)
    }
}
