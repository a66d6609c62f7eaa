//! Test-only oracle models shared by the integration and acceptance tests.
#![allow(dead_code)]

use npzd_core::rng::StreamRng;
use npzd_core::smc::{Prior, StateSpaceModel};
use npzd_core::Result;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `x' = a x + N(0, q)`, `y = x + N(0, r)`, `x_0 ~ N(0, q / (1 - a²))`.
/// With `sample_q` the single parameter is `q`; otherwise θ is ignored.
#[derive(Debug, Clone, Copy)]
pub struct LinearGaussian {
    pub a: f64,
    pub q: f64,
    pub r: f64,
    pub sample_q: bool,
}

impl LinearGaussian {
    pub fn standard() -> Self {
        Self {
            a: 0.9,
            q: 1.0,
            r: 1.0,
            sample_q: false,
        }
    }

    fn stationary_var(&self, q: f64) -> f64 {
        q / (1.0 - self.a * self.a)
    }

    /// Latent path and observations; time 0 is unobserved.
    pub fn simulate(&self, horizon: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        let mut x = self.stationary_var(self.q).sqrt() * rng.sample::<f64, _>(StandardNormal);
        let mut obs = vec![Vec::new()];
        for _ in 0..horizon {
            x = self.a * x + self.q.sqrt() * rng.sample::<f64, _>(StandardNormal);
            obs.push(vec![x + self.r.sqrt() * rng.sample::<f64, _>(StandardNormal)]);
        }
        obs
    }

    /// Exact log marginal likelihood by the Kalman recursion.
    pub fn kalman_log_evidence(&self, q: f64, obs: &[Vec<f64>]) -> f64 {
        let mut m = 0.0;
        let mut p = self.stationary_var(q);
        let mut total = 0.0;
        for (t, ys) in obs.iter().enumerate() {
            if t > 0 {
                m *= self.a;
                p = self.a * self.a * p + q;
            }
            for y in ys {
                let s = p + self.r;
                let v = y - m;
                total += -0.5 * (LN_2PI + s.ln() + v * v / s);
                let k = p / s;
                m += k * v;
                p *= 1.0 - k;
            }
        }
        total
    }
}

impl StateSpaceModel for LinearGaussian {
    type State = f64;
    type Params = f64;
    type Obs = f64;

    fn params(&self, theta: &[f64]) -> Result<f64> {
        Ok(if self.sample_q { theta[0] } else { self.q })
    }

    fn initial(&self, q: &f64, rng: &mut StreamRng) -> Result<f64> {
        Ok(self.stationary_var(*q).sqrt() * rng.sample::<f64, _>(StandardNormal))
    }

    fn transition(&self, prev: &f64, q: &f64, _: usize, rng: &mut StreamRng) -> Result<f64> {
        Ok(self.a * prev + q.sqrt() * rng.sample::<f64, _>(StandardNormal))
    }

    fn obs_loglik(&self, obs: &[f64], x: &f64, _: &f64) -> f64 {
        obs.iter()
            .map(|y| -0.5 * (LN_2PI + self.r.ln() + (y - x).powi(2) / self.r))
            .sum()
    }
}

/// Lognormal prior on one positive parameter, parameterised by its mean.
#[derive(Debug, Clone, Copy)]
pub struct LogNormal1 {
    pub mean: f64,
    pub sigma: f64,
}

impl LogNormal1 {
    pub fn mu(&self) -> f64 {
        self.mean.ln() - self.sigma * self.sigma / 2.0
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        if x.is_nan() || x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let z = (x.ln() - self.mu()) / self.sigma;
        -x.ln() - self.sigma.ln() - 0.5 * LN_2PI - 0.5 * z * z
    }
}

impl Prior for LogNormal1 {
    fn dim(&self) -> usize {
        1
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        self.log_pdf(theta[0])
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let e: f64 = StandardNormal.sample(rng);
        vec![(self.mu() + self.sigma * e).exp()]
    }

    fn initial(&self) -> Vec<f64> {
        vec![self.mean]
    }

    fn log_scales(&self) -> Vec<f64> {
        vec![self.sigma]
    }
}

use rand_distr::Distribution;

/// Sample mean and standard deviation.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Monte-Carlo standard error of the mean of a correlated series by batch means.
pub fn batch_means_se(v: &[f64], batches: usize) -> f64 {
    let size = v.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| v[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    mean_sd(&means).1 / (batches as f64).sqrt()
}
