//! Experiment configuration. Every field has a default, so `{}` is a valid
//! config; the resolved form is written next to each run's outputs.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::npzd::NpzdSettings;
use crate::obs::{cv_to_sigma_log, ObsNoise, ObsVariable};
use crate::prior::{default_priors, PriorSpec};
use crate::rng::{stream, tag};
use crate::smc::{PmmhConfig, Resampling};

use super::forcing::{load_forcing, synth_climatology, ClimatologyParams, ForcingSeries};

/// Inclusive range of forcing days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, day: usize) -> bool {
        (self.start..=self.end).contains(&day)
    }
}

/// Which (day, variable) pairs the twin experiment observes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Schedule {
    /// Every `every` days starting at the span start.
    Daily {
        #[serde(default = "all_observables")]
        variables: Vec<ObsVariable>,
        #[serde(default = "one")]
        every: usize,
    },
    /// Sparse, irregular DIN and Chla sampling: each day is sampled with
    /// probability `rate`.
    Sparse {
        #[serde(default = "sparse_rate")]
        rate: f64,
    },
    None,
}

fn all_observables() -> Vec<ObsVariable> {
    ObsVariable::OBSERVABLE.to_vec()
}

fn one() -> usize {
    1
}

fn sparse_rate() -> f64 {
    0.1
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Daily {
            variables: all_observables(),
            every: 1,
        }
    }
}

impl Schedule {
    /// Concrete `(day, variable)` list over `span`.
    pub fn expand(&self, span: Span, seed: u64) -> Vec<(usize, ObsVariable)> {
        match self {
            Schedule::Daily { variables, every } => (span.start..=span.end)
                .step_by((*every).max(1))
                .flat_map(|d| variables.iter().map(move |v| (d, *v)))
                .collect(),
            Schedule::Sparse { rate } => {
                let mut rng = stream(seed, &[tag::OBSERVATION, 1]);
                (span.start..=span.end)
                    .filter(|_| rng.random::<f64>() < *rate)
                    .flat_map(|d| [(d, ObsVariable::Din), (d, ObsVariable::Chla)])
                    .collect()
            }
            Schedule::None => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Forcing CSV; when absent the synthetic climatology is used.
    pub forcing_path: Option<PathBuf>,
    pub climatology: ClimatologyParams,
    /// Length of the synthetic forcing (days).
    pub climatology_days: usize,
    /// Priors JSON; when absent the built-in table is used.
    pub priors_path: Option<PathBuf>,
    /// Observation CSV for `infer`.
    pub obs_path: Option<PathBuf>,
    /// Assimilation window; defaults to the whole forcing.
    pub hindcast: Option<Span>,
    /// Forecast window; must start after the hindcast ends.
    pub forecast: Option<Span>,
    pub particles: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub thin: usize,
    pub proposal_scale: f64,
    pub resampling: Resampling,
    pub max_init_attempts: usize,
    /// Members of a free-running prior ensemble.
    pub ensemble_size: usize,
    /// Fix θ for `simulate` instead of drawing from the prior.
    pub theta: Option<Vec<f64>>,
    pub model: NpzdSettings,
    /// When set, every variable's observation error has this CV (converted
    /// to a log-scale SD), overriding `model.obs_noise`.
    pub obs_cv: Option<f64>,
    pub schedule: Schedule,
    /// Twin truth: θ_B shifted by this many prior log-SDs above the mean.
    pub truth_shift: f64,
    /// Use at most this many stored posterior draws in a forecast.
    pub forecast_draws: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let pmmh = PmmhConfig::default();
        Self {
            seed: pmmh.seed,
            forcing_path: None,
            climatology: ClimatologyParams::default(),
            climatology_days: 730,
            priors_path: None,
            obs_path: None,
            hindcast: None,
            forecast: None,
            particles: pmmh.particles,
            iterations: pmmh.iterations,
            warmup: pmmh.warmup,
            thin: 50,
            proposal_scale: pmmh.proposal_scale,
            resampling: pmmh.resampling,
            max_init_attempts: pmmh.max_init_attempts,
            ensemble_size: 200,
            theta: None,
            model: NpzdSettings::default(),
            obs_cv: None,
            schedule: Schedule::default(),
            truth_shift: 0.5,
            forecast_draws: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.apply_obs_cv();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialises");
        s.push('\n');
        s
    }

    pub fn apply_obs_cv(&mut self) {
        if let Some(cv) = self.obs_cv {
            self.model.obs_noise = ObsNoise::uniform(cv_to_sigma_log(cv));
        }
    }

    pub fn pmmh(&self) -> PmmhConfig {
        PmmhConfig {
            particles: self.particles,
            iterations: self.iterations,
            warmup: self.warmup,
            seed: self.seed,
            proposal_scale: self.proposal_scale,
            thin: self.thin,
            resampling: self.resampling,
            max_init_attempts: self.max_init_attempts,
        }
    }

    pub fn load_priors(&self) -> Result<PriorSpec> {
        match &self.priors_path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                PriorSpec::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
            None => Ok(default_priors()),
        }
    }

    pub fn load_forcing(&self) -> Result<ForcingSeries> {
        match &self.forcing_path {
            Some(p) => load_forcing(p),
            None => {
                self.climatology.validate()?;
                Ok(synth_climatology(self.climatology_days, &self.climatology))
            }
        }
    }

    pub fn hindcast_span(&self, forcing_len: usize) -> Result<Span> {
        let span = self.hindcast.unwrap_or(Span {
            start: 0,
            end: forcing_len.saturating_sub(1),
        });
        if span.start > span.end || span.end >= forcing_len {
            return Err(Error::Config(format!(
                "hindcast span {}..={} is outside the forcing (0..={})",
                span.start,
                span.end,
                forcing_len.saturating_sub(1)
            )));
        }
        Ok(span)
    }

    pub fn forecast_span(&self, forcing_len: usize) -> Result<Span> {
        let hind = self.hindcast_span(forcing_len)?;
        let span = self
            .forecast
            .ok_or_else(|| Error::Config("no forecast span configured".into()))?;
        if span.start <= hind.end {
            return Err(Error::Config(format!(
                "forecast span {}..={} overlaps the assimilation window {}..={}",
                span.start, span.end, hind.start, hind.end
            )));
        }
        if span.start > span.end || span.end >= forcing_len {
            return Err(Error::Config(format!(
                "forecast span {}..={} is outside the forcing (0..={})",
                span.start,
                span.end,
                forcing_len.saturating_sub(1)
            )));
        }
        Ok(span)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.particles == 0 || self.iterations == 0 || self.thin == 0 || self.ensemble_size == 0 {
            return Err(Error::Config(
                "particles, iterations, thin and ensemble_size must be at least 1".into(),
            ));
        }
        if self.warmup >= self.iterations {
            return Err(Error::Config(format!(
                "warmup ({}) must be smaller than iterations ({})",
                self.warmup, self.iterations
            )));
        }
        if !(self.proposal_scale > 0.0) {
            return Err(Error::Config("proposal_scale must be positive".into()));
        }
        if let Some(cv) = self.obs_cv {
            if !(cv > 0.0 && cv.is_finite()) {
                return Err(Error::Config(format!("obs_cv must be positive, got {cv}")));
            }
        }
        if let Schedule::Sparse { rate } = self.schedule {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("sparse schedule rate must be in [0, 1], got {rate}")));
            }
        }
        if !self.truth_shift.is_finite() {
            return Err(Error::Config("truth_shift must be finite".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn overrides_and_unknown_fields() {
        let cfg = ExperimentConfig::from_json(
            r#"{"particles": 50, "model": {"tau_p": 20, "statics": {"q10": 1.88}}, "obs_cv": 0.5}"#,
        )
        .unwrap();
        assert_eq!(cfg.particles, 50);
        assert_eq!(cfg.model.tau_p, 20.0);
        assert_eq!(cfg.model.statics.q10, 1.88);
        assert_eq!(cfg.model.statics.kappa, 0.1);
        assert!((cfg.model.obs_noise.chla - 0.4724).abs() < 1e-4);
        assert!(matches!(ExperimentConfig::from_json(r#"{"particle": 5}"#), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_json("[1"), Err(Error::Config(_))));
    }

    #[test]
    fn spans() {
        let cfg = ExperimentConfig {
            hindcast: Some(Span { start: 0, end: 364 }),
            forecast: Some(Span { start: 300, end: 500 }),
            ..ExperimentConfig::default()
        };
        assert!(matches!(cfg.forecast_span(730), Err(Error::Config(_))));
        let cfg = ExperimentConfig {
            forecast: Some(Span { start: 365, end: 729 }),
            ..cfg
        };
        assert_eq!(cfg.forecast_span(730).unwrap().len(), 365);
        assert!(cfg.forecast_span(700).is_err());
        assert_eq!(ExperimentConfig::default().hindcast_span(10).unwrap(), Span { start: 0, end: 9 });
    }

    #[test]
    fn schedules() {
        let span = Span { start: 3, end: 12 };
        assert_eq!(Schedule::default().expand(span, 1).len(), 50);
        let every = Schedule::Daily {
            variables: vec![ObsVariable::Chla],
            every: 3,
        };
        assert_eq!(
            every.expand(span, 1),
            vec![(3, ObsVariable::Chla), (6, ObsVariable::Chla), (9, ObsVariable::Chla), (12, ObsVariable::Chla)]
        );
        let sparse = Schedule::Sparse { rate: 0.1 }.expand(Span { start: 0, end: 9999 }, 4);
        assert!((sparse.len() as f64 / 2.0 - 1000.0).abs() < 120.0);
        assert!(sparse.iter().all(|(_, v)| matches!(v, ObsVariable::Din | ObsVariable::Chla)));
        assert!(Schedule::None.expand(span, 1).is_empty());
        let parsed: Schedule = serde_json::from_str(r#"{"kind": "daily"}"#).unwrap();
        assert_eq!(parsed, Schedule::default());
    }
}
