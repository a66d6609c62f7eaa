//! The NPZD state-space model: state `W = (X, B)` plus the diagnosed Chla that
//! feeds the next day's light field, driven by daily forcing.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ar::{ArProcess, ArSpec};
use crate::error::{Error, Result};
use crate::model::{self, BgcVector, ForcingRecord, StateVector, StaticParams};
use crate::obs::{self, Observable, ObsNoise, Observation};
use crate::prior::{PriorSpec, ThetaSample, THETA_DIM};
use crate::rng::StreamRng;
use crate::smc::StateSpaceModel;

/// One particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NpzdState {
    pub x: StateVector,
    pub b: BgcVector,
    /// Diagnosed Chla on this day (mg Chla m⁻³).
    pub chla: f64,
}

impl NpzdState {
    pub fn observable(&self) -> Observable {
        Observable {
            x: self.x,
            chla: self.chla,
        }
    }
}

/// Law of `X` on the first day. N starts at the boundary DIN; P, Z and D are
/// lognormal with the given means and log-SDs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialStateLaw {
    pub p_mean: f64,
    pub p_sigma: f64,
    pub z_mean: f64,
    pub z_sigma: f64,
    pub d_mean: f64,
    pub d_sigma: f64,
}

impl Default for InitialStateLaw {
    fn default() -> Self {
        Self {
            p_mean: 5.0,
            p_sigma: 0.5,
            z_mean: 5.0,
            z_sigma: 0.5,
            d_mean: 2.0,
            d_sigma: 0.5,
        }
    }
}

impl InitialStateLaw {
    fn draw<R: Rng + ?Sized>(&self, bcn: f64, rng: &mut R) -> StateVector {
        let mut lognormal = |mean: f64, sigma: f64| {
            let e: f64 = rng.sample(StandardNormal);
            (mean.ln() - sigma * sigma / 2.0 + sigma * e).exp()
        };
        let p = lognormal(self.p_mean, self.p_sigma);
        let z = lognormal(self.z_mean, self.z_sigma);
        let d = lognormal(self.d_mean, self.d_sigma);
        StateVector::new(bcn, p, z, d)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.p_mean, self.z_mean, self.d_mean].iter().all(|v| *v > 0.0 && v.is_finite())
            && [self.p_sigma, self.z_sigma, self.d_sigma].iter().all(|v| *v >= 0.0 && v.is_finite());
        if !ok {
            return Err(Error::Config(format!("invalid initial state law: {self:?}")));
        }
        Ok(())
    }
}

/// Fixed model settings that are not sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NpzdSettings {
    /// Constants; the sampled k_w, a_ch, s_d, f_d fields are overwritten per θ.
    pub statics: StaticParams,
    /// Persistence time of the phytoplankton-side community properties (d).
    pub tau_p: f64,
    /// Persistence time of the zooplankton-side community properties (d).
    pub tau_z: f64,
    /// Multiplier on every species log-SD; 0 freezes B at its mean.
    pub process_noise: f64,
    pub initial: InitialStateLaw,
    pub obs_noise: ObsNoise,
    /// Model values below this are floored in the likelihood.
    pub model_floor: f64,
}

impl Default for NpzdSettings {
    fn default() -> Self {
        Self {
            statics: StaticParams::default(),
            tau_p: 10.0,
            tau_z: 10.0,
            process_noise: 1.0,
            initial: InitialStateLaw::default(),
            obs_noise: ObsNoise::twin(),
            model_floor: obs::DEFAULT_MODEL_FLOOR,
        }
    }
}

impl NpzdSettings {
    pub fn validate(&self) -> Result<()> {
        self.statics.validate()?;
        self.initial.validate()?;
        self.obs_noise.validate(true)?;
        if !(self.tau_p >= 1.0 && self.tau_z >= 1.0) {
            return Err(Error::Config(format!(
                "AR time scales must be at least one day (tau_p {}, tau_z {})",
                self.tau_p, self.tau_z
            )));
        }
        if !(self.process_noise >= 0.0 && self.process_noise.is_finite()) {
            return Err(Error::Config(format!("process_noise must be >= 0, got {}", self.process_noise)));
        }
        if !(self.model_floor > 0.0) {
            return Err(Error::Config(format!("model_floor must be positive, got {}", self.model_floor)));
        }
        Ok(())
    }
}

/// Which diversity factor and time scale drive each B component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Community {
    Phytoplankton,
    Zooplankton,
}

/// For each B component (in [`BgcVector::NAMES`] order): the θ entry holding
/// its mean and the community it belongs to.
pub const B_MAPPING: [(&str, Community); 9] = [
    ("mu_gmax", Community::Phytoplankton),
    ("mu_lambdamax", Community::Phytoplankton),
    ("mu_rn", Community::Phytoplankton),
    ("mu_an", Community::Phytoplankton),
    ("mu_iz", Community::Zooplankton),
    ("mu_clz", Community::Zooplankton),
    ("mu_ez", Community::Zooplankton),
    ("mu_rd", Community::Zooplankton),
    ("mu_mq", Community::Zooplankton),
];

/// θ decoded into what the dynamics need.
#[derive(Debug, Clone, PartialEq)]
pub struct NpzdParams {
    pub statics: StaticParams,
    pub processes: [ArProcess; 9],
}

impl NpzdParams {
    /// Stationary means of the B components.
    pub fn b_means(&self) -> BgcVector {
        BgcVector::from_array(std::array::from_fn(|k| {
            let p = &self.processes[k];
            crate::ar::moments_from_innovation(&p.innov, p.tau).0
        }))
    }

    fn step_b<R: Rng + ?Sized>(&self, b: &BgcVector, rng: &mut R) -> BgcVector {
        let cur = b.to_array();
        BgcVector::from_array(std::array::from_fn(|k| self.processes[k].step(cur[k], rng)))
    }

    fn init_b<R: Rng + ?Sized>(&self, rng: &mut R) -> BgcVector {
        BgcVector::from_array(std::array::from_fn(|k| self.processes[k].init_stationary(rng)))
    }
}

/// Decode θ (canonical order) with the species log-SDs taken from `prior`.
pub fn decode_theta(theta: &[f64], prior: &PriorSpec, settings: &NpzdSettings) -> Result<NpzdParams> {
    let t = ThetaSample::from_slice(theta)?;
    if theta.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Domain(format!("parameters must be positive and finite: {theta:?}")));
    }
    let statics = StaticParams {
        k_w: t.k_w,
        a_ch: t.a_ch,
        s_d: t.s_d,
        f_d: t.f_d,
        ..settings.statics
    };
    statics.validate()?;
    let mut processes = Vec::with_capacity(9);
    for (name, community) in B_MAPPING {
        let idx = PriorSpec::index_of(name).expect("mapping names are canonical");
        let sigma = prior.parameters[idx].sigma * settings.process_noise;
        let (df, tau) = match community {
            Community::Phytoplankton => (t.pdf, settings.tau_p),
            Community::Zooplankton => (t.zdf, settings.tau_z),
        };
        processes.push(ArProcess::new(&ArSpec::from_mean(theta[idx], sigma, tau, df))?);
    }
    Ok(NpzdParams {
        statics,
        processes: processes.try_into().expect("nine processes"),
    })
}

/// The filter's time index `t` is forcing day `start_day + t`.
#[derive(Debug, Clone)]
pub struct NpzdModel<'a> {
    pub forcing: &'a [ForcingRecord],
    pub start_day: usize,
    pub settings: NpzdSettings,
    pub prior: PriorSpec,
}

impl<'a> NpzdModel<'a> {
    pub fn new(forcing: &'a [ForcingRecord], start_day: usize, settings: NpzdSettings, prior: PriorSpec) -> Result<Self> {
        settings.validate()?;
        if start_day >= forcing.len() {
            return Err(Error::Config(format!(
                "start day {start_day} is outside the forcing ({} days)",
                forcing.len()
            )));
        }
        Ok(Self {
            forcing,
            start_day,
            settings,
            prior,
        })
    }

    /// Number of transitions available before the forcing runs out.
    pub fn max_steps(&self) -> usize {
        self.forcing.len() - 1 - self.start_day
    }

    fn forcing_at(&self, t: usize) -> Result<&ForcingRecord> {
        self.forcing.get(self.start_day + t).ok_or_else(|| {
            Error::Config(format!(
                "day {} is outside the forcing ({} days)",
                self.start_day + t,
                self.forcing.len()
            ))
        })
    }

    /// Initial particle with the given physical state: stationary B draws and
    /// the Chla that is self-consistent with its own light field.
    pub fn initial_with_state(&self, x: StateVector, params: &NpzdParams, rng: &mut StreamRng) -> Result<NpzdState> {
        let b = params.init_b(rng);
        let f = self.forcing_at(0)?;
        let chla = model::equilibrium_chla(&x, &b, f, &params.statics)?;
        Ok(NpzdState { x, b, chla })
    }

    /// Free run of `steps` days from a given state at time index 0.
    pub fn simulate_from(
        &self,
        start: NpzdState,
        params: &NpzdParams,
        steps: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<NpzdState>> {
        let mut path = Vec::with_capacity(steps + 1);
        path.push(start);
        for t in 1..=steps {
            let next = self.transition(&path[t - 1], params, t, rng)?;
            path.push(next);
        }
        Ok(path)
    }

    /// Free run from a draw of the initial law.
    pub fn simulate(&self, params: &NpzdParams, steps: usize, rng: &mut StreamRng) -> Result<Vec<NpzdState>> {
        let start = self.initial(params, rng)?;
        self.simulate_from(start, params, steps, rng)
    }
}

impl StateSpaceModel for NpzdModel<'_> {
    type State = NpzdState;
    type Params = NpzdParams;
    type Obs = Observation;

    fn params(&self, theta: &[f64]) -> Result<NpzdParams> {
        if theta.len() != THETA_DIM {
            return Err(Error::Config(format!("expected {THETA_DIM} parameters, got {}", theta.len())));
        }
        decode_theta(theta, &self.prior, &self.settings)
    }

    fn initial(&self, params: &NpzdParams, rng: &mut StreamRng) -> Result<NpzdState> {
        let f = self.forcing_at(0)?;
        let x = self.settings.initial.draw(f.bcn, rng);
        self.initial_with_state(x, params, rng)
    }

    fn transition(&self, prev: &NpzdState, params: &NpzdParams, t: usize, rng: &mut StreamRng) -> Result<NpzdState> {
        let f = self.forcing_at(t)?;
        let (x, _) = model::step(&prev.x, &prev.b, f, &params.statics, prev.chla)?;
        let b = params.step_b(&prev.b, rng);
        let chla = model::diagnose(&x, &b, f, &params.statics, prev.chla)?.chla;
        if !chla.is_finite() {
            return Err(Error::Integration {
                step: t,
                reason: "non-finite Chla".into(),
            });
        }
        Ok(NpzdState { x, b, chla })
    }

    fn obs_loglik(&self, obs: &[Observation], state: &NpzdState, _: &NpzdParams) -> f64 {
        obs::obs_loglik(obs, &state.observable(), &self.settings.obs_noise, self.settings.model_floor)
    }
}

/// Twin-experiment truth: every θ_B entry shifted up by `shift` prior log-SDs
/// from its mean; θ_X at the prior means.
pub fn shifted_truth(prior: &PriorSpec, shift: f64) -> Vec<f64> {
    let means = prior.means();
    prior
        .parameters
        .iter()
        .zip(means)
        .enumerate()
        .map(|(i, (e, m))| if i < 4 { m } else { m * (shift * e.sigma).exp() })
        .collect()
}
