//! First-order autoregressive processes with lognormal innovations.
//!
//! A community-mean property `B` follows
//! `B(t+1) = B(t) (1 - 1/τ) + ζ(t) / τ` with `ln ζ ~ N(μ_z, σ_z²)`. The
//! innovation law is chosen so the stationary mean equals the mean of the
//! species-level lognormal and the stationary CV equals the species CV scaled
//! by a diversity factor.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Species-level lognormal law plus the community persistence time and diversity factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArSpec {
    /// Mean of log species value.
    pub mu_lphi: f64,
    /// SD of log species value.
    pub sigma_lphi: f64,
    /// Characteristic time (days).
    pub tau: f64,
    /// Diversity factor; its square stands in for the sum of squared biomass fractions.
    pub df: f64,
}

impl ArSpec {
    /// Spec whose stationary mean is `mean` (natural units).
    pub fn from_mean(mean: f64, sigma_lphi: f64, tau: f64, df: f64) -> Self {
        Self {
            mu_lphi: mean.ln() - sigma_lphi * sigma_lphi / 2.0,
            sigma_lphi,
            tau,
            df,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.5) {
            return Err(Error::Domain(format!(
                "AR time scale must exceed 1/2 day for stationarity, got {}",
                self.tau
            )));
        }
        if !(self.sigma_lphi >= 0.0) || !self.mu_lphi.is_finite() {
            return Err(Error::Domain(format!(
                "invalid species law: mu {} sigma {}",
                self.mu_lphi, self.sigma_lphi
            )));
        }
        if !(self.df > 0.0) {
            return Err(Error::Domain(format!("diversity factor must be positive, got {}", self.df)));
        }
        Ok(())
    }
}

/// Log-mean and log-SD of the innovation ζ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnovationParams {
    pub mu_z: f64,
    pub sigma_z: f64,
}

/// Innovation law that reproduces the species mean and the diversity-scaled CV
/// at stationarity.
pub fn innovation_params(spec: &ArSpec) -> Result<InnovationParams> {
    spec.validate()?;
    let s2 = spec.sigma_lphi * spec.sigma_lphi;
    let var_z = ((2.0 * spec.tau - 1.0) * spec.df * spec.df * s2.exp_m1()).ln_1p();
    Ok(InnovationParams {
        mu_z: spec.mu_lphi + s2 / 2.0 - var_z / 2.0,
        sigma_z: var_z.sqrt(),
    })
}

/// One day of the AR(1) recursion given a standard normal draw.
#[inline]
pub fn ar_step(b: f64, innov: &InnovationParams, tau: f64, noise: f64) -> f64 {
    b * (1.0 - 1.0 / tau) + (innov.mu_z + innov.sigma_z * noise).exp() / tau
}

/// Stationary mean and coefficient of variation.
pub fn stationary_moments(spec: &ArSpec) -> (f64, f64) {
    let s2 = spec.sigma_lphi * spec.sigma_lphi;
    let mean = (spec.mu_lphi + s2 / 2.0).exp();
    let cv = spec.df * s2.exp_m1().sqrt();
    (mean, cv)
}

/// Stationary mean and CV implied by an innovation law and time scale.
pub fn moments_from_innovation(innov: &InnovationParams, tau: f64) -> (f64, f64) {
    let s2 = innov.sigma_z * innov.sigma_z;
    let mean = (innov.mu_z + s2 / 2.0).exp();
    let cv = (s2.exp_m1() / (2.0 * tau - 1.0)).sqrt();
    (mean, cv)
}

/// A configured process. Requires `τ ≥ 1` so the autoregressive coefficient is
/// non-negative and every path stays positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArProcess {
    pub innov: InnovationParams,
    pub tau: f64,
}

impl ArProcess {
    pub fn new(spec: &ArSpec) -> Result<Self> {
        if !(spec.tau >= 1.0) {
            return Err(Error::Config(format!(
                "AR time scale must be at least one day, got {}",
                spec.tau
            )));
        }
        Ok(Self {
            innov: innovation_params(spec)?,
            tau: spec.tau,
        })
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, b: f64, rng: &mut R) -> f64 {
        let noise: f64 = rng.sample(StandardNormal);
        ar_step(b, &self.innov, self.tau, noise)
    }

    pub fn burn_in_steps(&self) -> usize {
        (20.0 * self.tau).ceil() as usize
    }

    /// Approximate stationary draw: an innovation followed by `ceil(20 τ)` steps.
    pub fn init_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let noise: f64 = rng.sample(StandardNormal);
        let mut b = (self.innov.mu_z + self.innov.sigma_z * noise).exp();
        for _ in 0..self.burn_in_steps() {
            b = self.step(b, rng);
        }
        b
    }
}

/// Draw an approximately stationary value for `spec`.
pub fn init_stationary<R: Rng + ?Sized>(spec: &ArSpec, rng: &mut R) -> Result<f64> {
    Ok(ArProcess::new(spec)?.init_stationary(rng))
}
