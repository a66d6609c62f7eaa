//! Parameter-level priors: independent lognormal entries plus a zero-truncated
//! normal for the detrital sinking rate.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Canonical order of the sampled parameters: the four state-equation
/// parameters followed by the eleven that govern the AR processes.
pub const THETA_NAMES: [&str; 15] = [
    "k_w",
    "a_ch",
    "s_d",
    "f_d",
    "pdf",
    "zdf",
    "mu_gmax",
    "mu_rn",
    "mu_lambdamax",
    "mu_an",
    "mu_iz",
    "mu_clz",
    "mu_ez",
    "mu_mq",
    "mu_rd",
];

pub const THETA_DIM: usize = THETA_NAMES.len();

/// The prior table shipped with the crate; [`default_priors`] serialises to exactly this text.
pub const DEFAULT_PRIORS_JSON: &str = include_str!("../data/default_priors.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `sigma` is the SD of the log.
    Lognormal,
    /// `mean` and `sigma` are the location and scale of the untruncated normal.
    NormalTruncatedAtZero,
}

/// How a lognormal entry's `mean` column is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LognormalLocation {
    /// `mean` is the expected value: log-mean = ln(mean) - sigma²/2.
    #[default]
    Mean,
    /// `mean` is the median: log-mean = ln(mean).
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorEntry {
    pub name: String,
    pub family: Family,
    pub mean: f64,
    pub sigma: f64,
    /// Optional upper support bound (fractions are confined to (0, 1]).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

impl PriorEntry {
    fn lognormal(name: &str, mean: f64, sigma: f64) -> Self {
        Self {
            name: name.into(),
            family: Family::Lognormal,
            mean,
            sigma,
            upper: None,
        }
    }

    fn fraction(name: &str, mean: f64, sigma: f64) -> Self {
        Self {
            upper: Some(1.0),
            ..Self::lognormal(name, mean, sigma)
        }
    }

    /// Location of the underlying normal (log scale for lognormal entries).
    pub fn location(&self, convention: LognormalLocation) -> f64 {
        match (self.family, convention) {
            (Family::Lognormal, LognormalLocation::Mean) => self.mean.ln() - self.sigma * self.sigma / 2.0,
            (Family::Lognormal, LognormalLocation::Median) => self.mean.ln(),
            (Family::NormalTruncatedAtZero, _) => self.mean,
        }
    }

    /// Log of the probability mass the untruncated law places inside the support.
    fn log_mass(&self, loc: f64) -> f64 {
        let s = self.sigma;
        match (self.family, self.upper) {
            (Family::Lognormal, None) => 0.0,
            (Family::Lognormal, Some(u)) => std_normal_cdf((u.ln() - loc) / s).ln(),
            (Family::NormalTruncatedAtZero, None) => std_normal_cdf(loc / s).ln(),
            (Family::NormalTruncatedAtZero, Some(u)) => {
                (std_normal_cdf((u - loc) / s) - std_normal_cdf(-loc / s)).ln()
            }
        }
    }

    fn in_support(&self, x: f64) -> bool {
        x.is_finite() && x > 0.0 && self.upper.is_none_or(|u| x <= u)
    }

    pub fn log_density(&self, x: f64, convention: LognormalLocation) -> f64 {
        if !self.in_support(x) {
            return f64::NEG_INFINITY;
        }
        let loc = self.location(convention);
        let s = self.sigma;
        let core = match self.family {
            Family::Lognormal => {
                let u = (x.ln() - loc) / s;
                -x.ln() - s.ln() - 0.5 * (2.0 * PI).ln() - 0.5 * u * u
            }
            Family::NormalTruncatedAtZero => {
                let u = (x - loc) / s;
                -s.ln() - 0.5 * (2.0 * PI).ln() - 0.5 * u * u
            }
        };
        core - self.log_mass(loc)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, convention: LognormalLocation) -> f64 {
        let loc = self.location(convention);
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = match self.family {
                Family::Lognormal => (loc + self.sigma * z).exp(),
                Family::NormalTruncatedAtZero => loc + self.sigma * z,
            };
            if self.in_support(x) {
                return x;
            }
        }
    }

    /// Expected value of the (possibly truncated) law.
    pub fn expected_value(&self, convention: LognormalLocation) -> f64 {
        let loc = self.location(convention);
        let s = self.sigma;
        match self.family {
            Family::Lognormal => {
                let raw = (loc + s * s / 2.0).exp();
                match self.upper {
                    Some(u) => {
                        let b = (u.ln() - loc) / s;
                        raw * std_normal_cdf(b - s) / std_normal_cdf(b)
                    }
                    None => raw,
                }
            }
            Family::NormalTruncatedAtZero => {
                let a = -loc / s;
                match self.upper {
                    Some(u) => {
                        let b = (u - loc) / s;
                        loc + s * (std_normal_pdf(a) - std_normal_pdf(b))
                            / (std_normal_cdf(b) - std_normal_cdf(a))
                    }
                    None => loc + s * std_normal_pdf(a) / std_normal_cdf(-a),
                }
            }
        }
    }

    /// Approximate SD of the log of the parameter, used to scale proposals.
    pub fn log_scale(&self) -> f64 {
        match self.family {
            Family::Lognormal => self.sigma,
            Family::NormalTruncatedAtZero => self.sigma / self.mean.abs().max(self.sigma),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.mean > 0.0 && self.mean.is_finite()) {
            return Err(Error::Config(format!("prior {}: mean must be positive", self.name)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("prior {}: sigma must be positive", self.name)));
        }
        if let Some(u) = self.upper {
            if !(u > 0.0) {
                return Err(Error::Config(format!("prior {}: upper bound must be positive", self.name)));
            }
        }
        Ok(())
    }
}

/// The full prior: one entry per name in [`THETA_NAMES`], stored in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    #[serde(default)]
    pub lognormal_location: LognormalLocation,
    pub parameters: Vec<PriorEntry>,
}

/// Priors for the fifteen sampled parameters.
pub fn default_priors() -> PriorSpec {
    PriorSpec {
        lognormal_location: LognormalLocation::Mean,
        parameters: vec![
            PriorEntry::lognormal("k_w", 0.03, 0.2),
            PriorEntry::lognormal("a_ch", 0.04, 0.3),
            PriorEntry {
                name: "s_d".into(),
                family: Family::NormalTruncatedAtZero,
                mean: 5.0,
                sigma: 1.0,
                upper: None,
            },
            PriorEntry::fraction("f_d", 0.5, 0.1),
            PriorEntry::fraction("pdf", 0.15, 0.4),
            PriorEntry::fraction("zdf", 0.15, 0.4),
            PriorEntry::lognormal("mu_gmax", 1.2, 0.63),
            PriorEntry::fraction("mu_rn", 0.25, 0.3),
            PriorEntry::lognormal("mu_lambdamax", 0.03, 0.37),
            PriorEntry::lognormal("mu_an", 0.3, 1.0),
            PriorEntry::lognormal("mu_iz", 4.7, 0.7),
            PriorEntry::lognormal("mu_clz", 0.2, 1.3),
            PriorEntry::fraction("mu_ez", 0.32, 0.25),
            PriorEntry::lognormal("mu_mq", 0.01, 1.0),
            PriorEntry::lognormal("mu_rd", 0.1, 0.5),
        ],
    }
}

impl PriorSpec {
    /// Check names and values, reordering entries into canonical order.
    pub fn normalized(mut self) -> Result<Self> {
        if self.parameters.len() != THETA_DIM {
            return Err(Error::Config(format!(
                "prior must have exactly {THETA_DIM} entries, found {}",
                self.parameters.len()
            )));
        }
        let mut ordered = Vec::with_capacity(THETA_DIM);
        for name in THETA_NAMES {
            let idx = self
                .parameters
                .iter()
                .position(|e| e.name == name)
                .ok_or_else(|| Error::Config(format!("prior is missing entry {name:?}")))?;
            let entry = self.parameters.swap_remove(idx);
            entry.validate()?;
            ordered.push(entry);
        }
        self.parameters = ordered;
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<PriorSpec>(text)?.normalized()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("prior spec serialises");
        s.push('\n');
        s
    }

    pub fn lookup(&self, name: &str) -> Option<&PriorEntry> {
        self.parameters.iter().find(|e| e.name == name)
    }

    pub fn index_of(name: &str) -> Option<usize> {
        THETA_NAMES.iter().position(|n| *n == name)
    }

    /// Expected values, in canonical order.
    pub fn means(&self) -> Vec<f64> {
        self.parameters
            .iter()
            .map(|e| e.expected_value(self.lognormal_location))
            .collect()
    }

    pub fn log_scales(&self) -> Vec<f64> {
        self.parameters.iter().map(PriorEntry::log_scale).collect()
    }
}

/// One draw of the sampled parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaSample {
    pub k_w: f64,
    pub a_ch: f64,
    pub s_d: f64,
    pub f_d: f64,
    pub pdf: f64,
    pub zdf: f64,
    pub mu_gmax: f64,
    pub mu_rn: f64,
    pub mu_lambdamax: f64,
    pub mu_an: f64,
    pub mu_iz: f64,
    pub mu_clz: f64,
    pub mu_ez: f64,
    pub mu_mq: f64,
    pub mu_rd: f64,
}

impl ThetaSample {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.k_w,
            self.a_ch,
            self.s_d,
            self.f_d,
            self.pdf,
            self.zdf,
            self.mu_gmax,
            self.mu_rn,
            self.mu_lambdamax,
            self.mu_an,
            self.mu_iz,
            self.mu_clz,
            self.mu_ez,
            self.mu_mq,
            self.mu_rd,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != THETA_DIM {
            return Err(Error::Data(format!(
                "expected {THETA_DIM} parameter values, got {}",
                v.len()
            )));
        }
        Ok(Self {
            k_w: v[0],
            a_ch: v[1],
            s_d: v[2],
            f_d: v[3],
            pdf: v[4],
            zdf: v[5],
            mu_gmax: v[6],
            mu_rn: v[7],
            mu_lambdamax: v[8],
            mu_an: v[9],
            mu_iz: v[10],
            mu_clz: v[11],
            mu_ez: v[12],
            mu_mq: v[13],
            mu_rd: v[14],
        })
    }
}

pub fn sample_prior<R: Rng + ?Sized>(spec: &PriorSpec, rng: &mut R) -> ThetaSample {
    let v: Vec<f64> = spec
        .parameters
        .iter()
        .map(|e| e.sample(rng, spec.lognormal_location))
        .collect();
    ThetaSample::from_slice(&v).expect("spec has one entry per parameter")
}

/// Sum of independent component log-densities; `-inf` outside the support.
pub fn log_prior_density(spec: &PriorSpec, theta: &ThetaSample) -> f64 {
    log_prior_density_slice(spec, &theta.to_vec())
}

pub(crate) fn log_prior_density_slice(spec: &PriorSpec, theta: &[f64]) -> f64 {
    spec.parameters
        .iter()
        .zip(theta)
        .map(|(e, &x)| e.log_density(x, spec.lognormal_location))
        .sum()
}

impl crate::smc::Prior for PriorSpec {
    fn dim(&self) -> usize {
        THETA_DIM
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        log_prior_density_slice(self, theta)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        sample_prior(self, rng).to_vec()
    }

    fn initial(&self) -> Vec<f64> {
        self.means()
    }

    fn log_scales(&self) -> Vec<f64> {
        PriorSpec::log_scales(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    /// Composite Simpson integral of `f` over `[a, b]` with `n` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn shipped_table_matches_builtin() {
        assert_eq!(default_priors().to_json(), DEFAULT_PRIORS_JSON);
        assert_eq!(PriorSpec::from_json(DEFAULT_PRIORS_JSON).unwrap(), default_priors());
    }

    #[test]
    fn table_lookups() {
        let p = default_priors();
        let g = p.lookup("mu_gmax").unwrap();
        assert_eq!((g.mean, g.sigma, g.family), (1.2, 0.63, Family::Lognormal));
        let s = p.lookup("s_d").unwrap();
        assert_eq!((s.mean, s.sigma, s.family), (5.0, 1.0, Family::NormalTruncatedAtZero));
        let z = p.lookup("zdf").unwrap();
        assert_eq!((z.mean, z.sigma), (0.15, 0.4));
        assert_eq!(p.parameters.len(), 15);
        for (e, name) in p.parameters.iter().zip(THETA_NAMES) {
            assert_eq!(e.name, name);
        }
    }

    #[test]
    fn spec_validation() {
        let mut p = default_priors();
        p.parameters.pop();
        assert!(matches!(p.normalized(), Err(Error::Config(_))));
        let mut p = default_priors();
        p.parameters[3].sigma = 0.0;
        assert!(p.normalized().is_err());
        let mut p = default_priors();
        p.parameters.reverse();
        assert_eq!(p.normalized().unwrap(), default_priors());
    }

    #[test]
    fn degenerate_entry_samples_its_mean() {
        let e = PriorEntry::lognormal("x", 0.7, 1e-12);
        let mut rng = stream(1, &[]);
        assert!((e.sample(&mut rng, LognormalLocation::Mean) - 0.7).abs() < 1e-10);
    }

    #[test]
    fn lognormal_draws_have_table_mean() {
        let p = default_priors();
        let e = p.lookup("mu_gmax").unwrap();
        let mut rng = stream(2, &[]);
        let n = 100_000;
        let m = (0..n).map(|_| e.sample(&mut rng, p.lognormal_location)).sum::<f64>() / n as f64;
        assert!((m / 1.2 - 1.0).abs() < 0.02, "{m}");
    }

    #[test]
    fn sinking_draws_are_positive() {
        let p = default_priors();
        let e = p.lookup("s_d").unwrap();
        let mut rng = stream(3, &[]);
        assert!((0..100_000).all(|_| e.sample(&mut rng, p.lognormal_location) > 0.0));
    }

    #[test]
    fn densities_integrate_to_one() {
        let p = default_priors();
        for conv in [LognormalLocation::Mean, LognormalLocation::Median] {
            for e in &p.parameters {
                let f = |x: f64| e.log_density(x, conv).exp();
                let total = match (e.family, e.upper) {
                    (_, Some(u)) => {
                        // substitute x = u * exp(-y) to resolve the lognormal near 0
                        simpson(|y: f64| f(u * (-y).exp()) * u * (-y).exp(), 0.0, 60.0, 400_000)
                    }
                    (Family::Lognormal, None) => {
                        let loc = e.location(conv);
                        let (lo, hi) = (loc - 12.0 * e.sigma, loc + 12.0 * e.sigma);
                        simpson(|y: f64| f(y.exp()) * y.exp(), lo, hi, 200_000)
                    }
                    (Family::NormalTruncatedAtZero, None) => {
                        simpson(f, 1e-300, e.mean + 14.0 * e.sigma, 200_000)
                    }
                };
                assert!((total - 1.0).abs() < 1e-6, "{} {conv:?}: {total}", e.name);
            }
        }
    }

    #[test]
    fn lognormal_mode_on_grid() {
        let p = default_priors();
        let e = p.lookup("mu_clz").unwrap();
        let loc = e.location(p.lognormal_location);
        let mode = (loc - e.sigma * e.sigma).exp();
        let grid: Vec<f64> = (1..200_000).map(|i| i as f64 * 1e-6).collect();
        let best = grid
            .iter()
            .copied()
            .max_by(|a, b| {
                e.log_density(*a, p.lognormal_location)
                    .total_cmp(&e.log_density(*b, p.lognormal_location))
            })
            .unwrap();
        assert!((best - mode).abs() <= 1e-6, "{best} vs {mode}");
    }

    #[test]
    fn outside_support_is_log_zero() {
        let p = default_priors();
        let mut theta = ThetaSample::from_slice(&p.means()).unwrap();
        assert!(log_prior_density(&p, &theta).is_finite());
        theta.f_d = -0.1;
        assert_eq!(log_prior_density(&p, &theta), f64::NEG_INFINITY);
        theta.f_d = 1.2;
        assert_eq!(log_prior_density(&p, &theta), f64::NEG_INFINITY);
    }

    #[test]
    fn truncated_means_match_simulation() {
        let p = default_priors();
        let mut rng = stream(4, &[]);
        for e in &p.parameters {
            let n = 200_000;
            let m = (0..n).map(|_| e.sample(&mut rng, p.lognormal_location)).sum::<f64>() / n as f64;
            let exact = e.expected_value(p.lognormal_location);
            let sd = e.mean * (e.sigma * e.sigma).exp_m1().sqrt().max(e.sigma / e.mean);
            assert!((m - exact).abs() < 5.0 * sd / (n as f64).sqrt(), "{}: {m} vs {exact}", e.name);
        }
    }
}
