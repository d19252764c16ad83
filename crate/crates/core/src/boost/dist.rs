//! Normal distribution over log-seconds, parametrized by (mu, log_sigma).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 0.5 * ln(2π)
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistParams {
    pub mu: f64,
    pub log_sigma: f64,
}

impl DistParams {
    pub fn new(mu: f64, log_sigma: f64) -> Self {
        Self { mu, log_sigma }
    }

    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }

    /// Mean of the implied log-normal distribution over seconds.
    pub fn mean_seconds(&self) -> f64 {
        let s = self.sigma();
        (self.mu + 0.5 * s * s).exp()
    }

    /// Median of the implied log-normal distribution over seconds.
    pub fn median_seconds(&self) -> f64 {
        self.mu.exp()
    }
}

/// Negative log-likelihood of `z` under N(mu, exp(log_sigma)^2).
pub fn nll(z: f64, theta: DistParams) -> Result<f64> {
    if !(z.is_finite() && theta.mu.is_finite() && theta.log_sigma.is_finite()) {
        return Err(Error::Numeric(format!("nll({z}, {theta:?})")));
    }
    Ok(nll_unchecked(z, theta))
}

#[inline]
pub(crate) fn nll_unchecked(z: f64, theta: DistParams) -> f64 {
    let d = z - theta.mu;
    HALF_LN_2PI + theta.log_sigma + d * d / (2.0 * (2.0 * theta.log_sigma).exp())
}

/// NLL of the log-normal density over seconds, `y = exp(z)`.
pub fn nll_seconds(y: f64, theta: DistParams) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::Numeric(format!("nll_seconds requires y > 0, got {y}")));
    }
    let z = y.ln();
    Ok(nll(z, theta)? + z)
}

/// Ordinary gradient of [`nll`] with respect to (mu, log_sigma).
pub fn gradient(z: f64, theta: DistParams) -> (f64, f64) {
    let var = (2.0 * theta.log_sigma).exp();
    let d = z - theta.mu;
    ((theta.mu - z) / var, 1.0 - d * d / var)
}

/// Diagonal of the Fisher information in (mu, log_sigma) coordinates.
pub fn fisher_diagonal(theta: DistParams) -> (f64, f64) {
    (1.0 / (2.0 * theta.log_sigma).exp(), 2.0)
}

/// Fisher-preconditioned gradient of [`nll`].
#[inline]
pub fn natural_gradient(z: f64, theta: DistParams) -> (f64, f64) {
    let r = (z - theta.mu) / theta.sigma();
    (theta.mu - z, (1.0 - r * r) / 2.0)
}
