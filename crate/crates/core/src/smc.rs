//! Model-generic sequential Monte Carlo: a bootstrap particle filter that keeps
//! particle ancestry, and a particle-marginal Metropolis-Hastings sampler with
//! an adaptive log-space random-walk proposal.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, tag, StreamRng};

/// A state-space model the filter can drive. Only simulation from the
/// transition is needed; its density is never evaluated.
pub trait StateSpaceModel: Sync {
    type State: Clone + Send + Sync;
    type Params: Send + Sync;
    type Obs: Sync;

    /// Decode a (positive) parameter vector.
    fn params(&self, theta: &[f64]) -> Result<Self::Params>;

    fn initial(&self, params: &Self::Params, rng: &mut StreamRng) -> Result<Self::State>;

    /// Draw the state at time index `t` given the state at `t - 1`.
    fn transition(
        &self,
        prev: &Self::State,
        params: &Self::Params,
        t: usize,
        rng: &mut StreamRng,
    ) -> Result<Self::State>;

    /// Log-likelihood of the observations at one time; zero for an empty slice.
    fn obs_loglik(&self, obs: &[Self::Obs], state: &Self::State, params: &Self::Params) -> f64;
}

/// Prior over a positive parameter vector, as needed by [`pmmh`].
pub trait Prior {
    fn dim(&self) -> usize;
    /// `-inf` outside the support.
    fn log_density(&self, theta: &[f64]) -> f64;
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64>;
    /// Starting point of a chain.
    fn initial(&self) -> Vec<f64>;
    /// Typical spread of each `ln θ` component; scales the warmup proposal.
    fn log_scales(&self) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    #[default]
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub particles: usize,
    pub resampling: Resampling,
    /// Keep every time slice and ancestor so whole trajectories can be drawn.
    pub store_history: bool,
}

impl FilterConfig {
    pub fn new(particles: usize) -> Self {
        Self {
            particles,
            resampling: Resampling::Multinomial,
            store_history: true,
        }
    }
}

/// Weighted particles with their genealogy.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble<S> {
    /// `states[t][i]`; only the final slice when history is not stored.
    pub states: Vec<Vec<S>>,
    /// `ancestors[t - 1][i]` is the index in `states[t - 1]` that particle `i`
    /// at time `t` descends from.
    pub ancestors: Vec<Vec<usize>>,
    /// Log-weights at the final time.
    pub log_weights: Vec<f64>,
    /// Per-time log of the mean weight; these sum to the log-evidence.
    pub log_evidence_terms: Vec<f64>,
}

impl<S> ParticleEnsemble<S> {
    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn final_states(&self) -> &[S] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutput<S> {
    pub log_evidence: f64,
    pub ensemble: ParticleEnsemble<S>,
}

/// `ln Σ exp(x)`, or `-inf` if every term is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn normalized_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Data("no particle has a finite log-weight".into()));
    }
    let w: Vec<f64> = log_weights
        .iter()
        .map(|v| if v.is_nan() { 0.0 } else { (v - max).exp() })
        .collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Map sorted uniforms onto the cumulative weights.
fn invert_sorted(weights: &[f64], sorted_uniforms: impl Iterator<Item = f64>) -> Vec<usize> {
    let last = weights.len() - 1;
    let mut out = Vec::with_capacity(weights.len());
    let mut cumulative = weights[0];
    let mut j = 0;
    for u in sorted_uniforms {
        while u >= cumulative && j < last {
            j += 1;
            cumulative += weights[j];
        }
        // skip zero-weight entries the rounding tail may land on
        let mut k = j;
        while weights[k] == 0.0 && k > 0 {
            k -= 1;
        }
        out.push(k);
    }
    out
}

/// `n` independent categorical draws with probabilities proportional to
/// `exp(log_weights)`. Returned indices are in increasing order.
pub fn resample_multinomial<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    let w = normalized_weights(log_weights)?;
    let n = w.len();
    // Order statistics of n uniforms from normalised exponential spacings.
    let spacings: Vec<f64> = (0..=n)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let total: f64 = spacings.iter().sum();
    let mut acc = 0.0;
    let uniforms = spacings[..n].iter().map(move |e| {
        acc += e;
        acc / total
    });
    Ok(invert_sorted(&w, uniforms))
}

/// Systematic resampling: one uniform offset, evenly spaced points.
pub fn resample_systematic<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    let w = normalized_weights(log_weights)?;
    let n = w.len();
    let u0: f64 = rng.random::<f64>();
    Ok(invert_sorted(&w, (0..n).map(|k| (u0 + k as f64) / n as f64)))
}

fn resample<R: Rng + ?Sized>(scheme: Resampling, log_weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    match scheme {
        Resampling::Multinomial => resample_multinomial(log_weights, rng),
        Resampling::Systematic => resample_systematic(log_weights, rng),
    }
}

fn weigh<M: StateSpaceModel>(
    model: &M,
    obs: &[M::Obs],
    states: &[M::State],
    alive: &[bool],
    params: &M::Params,
) -> Vec<f64> {
    states
        .par_iter()
        .zip(alive.par_iter())
        .map(|(s, &ok)| {
            if !ok {
                f64::NEG_INFINITY
            } else if obs.is_empty() {
                0.0
            } else {
                let ll = model.obs_loglik(obs, s, params);
                if ll.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    ll
                }
            }
        })
        .collect()
}

/// Bootstrap particle filter over `observations.len() - 1` transitions.
///
/// `observations[t]` holds everything observed at time index `t` (time 0 is the
/// initial state). Particles are resampled before every transition, so the
/// evidence estimate is the product over time of the mean incremental weight.
/// Random streams are keyed by `seed` and the particle slot, so the result does
/// not depend on how the particle loop is scheduled.
pub fn bootstrap_filter<M: StateSpaceModel>(
    model: &M,
    params: &M::Params,
    observations: &[Vec<M::Obs>],
    config: &FilterConfig,
    seed: u64,
) -> Result<FilterOutput<M::State>> {
    let n = config.particles;
    if n == 0 {
        return Err(Error::Config("particle count must be at least 1".into()));
    }
    if observations.is_empty() {
        return Err(Error::Config("observation series must cover at least time 0".into()));
    }
    let horizon = observations.len() - 1;
    let ln_n = (n as f64).ln();

    let mut rngs: Vec<StreamRng> = (0..n as u64).map(|i| stream(seed, &[tag::PARTICLE, i])).collect();
    let mut resample_rng = stream(seed, &[tag::RESAMPLE]);

    let initial: Vec<Result<M::State>> = rngs.par_iter_mut().map(|rng| model.initial(params, rng)).collect();
    let mut current = Vec::with_capacity(n);
    for s in initial {
        current.push(s?);
    }
    let mut alive = vec![true; n];

    let mut log_weights = weigh(model, &observations[0], &current, &alive, params);
    let mut terms = Vec::with_capacity(horizon + 1);
    let first = if observations[0].is_empty() { 0.0 } else { log_sum_exp(&log_weights) - ln_n };
    if first == f64::NEG_INFINITY || first.is_nan() {
        return Err(Error::FilterCollapse { t: 0 });
    }
    terms.push(first);

    let mut history: Vec<Vec<M::State>> = Vec::new();
    let mut ancestry: Vec<Vec<usize>> = Vec::new();
    if config.store_history {
        history.reserve(horizon + 1);
        ancestry.reserve(horizon);
    }

    for (t, obs_t) in observations.iter().enumerate().skip(1) {
        let parents = resample(config.resampling, &log_weights, &mut resample_rng)?;
        let stepped: Vec<Option<M::State>> = parents
            .par_iter()
            .zip(rngs.par_iter_mut())
            .map(|(&a, rng)| model.transition(&current[a], params, t, rng).ok())
            .collect();
        let mut next = Vec::with_capacity(n);
        for (s, &a) in stepped.into_iter().zip(&parents) {
            match s {
                Some(s) => {
                    next.push(s);
                    alive.push(true);
                }
                None => {
                    next.push(current[a].clone());
                    alive.push(false);
                }
            }
        }
        alive.drain(..n);
        let prev = std::mem::replace(&mut current, next);
        if config.store_history {
            history.push(prev);
            ancestry.push(parents);
        }
        log_weights = weigh(model, obs_t, &current, &alive, params);
        let term = log_sum_exp(&log_weights) - ln_n;
        if term == f64::NEG_INFINITY || term.is_nan() {
            return Err(Error::FilterCollapse { t });
        }
        terms.push(if obs_t.is_empty() && term.abs() < 1e-15 { 0.0 } else { term });
    }
    history.push(current);

    Ok(FilterOutput {
        log_evidence: terms.iter().sum(),
        ensemble: ParticleEnsemble {
            states: history,
            ancestors: ancestry,
            log_weights,
            log_evidence_terms: terms,
        },
    })
}

/// Draw one whole trajectory by picking a final particle in proportion to its
/// weight and following its ancestry back to time 0.
pub fn draw_trajectory<S: Clone, R: Rng + ?Sized>(ensemble: &ParticleEnsemble<S>, rng: &mut R) -> Result<Vec<S>> {
    let w = normalized_weights(&ensemble.log_weights)
        .map_err(|_| Error::Data("cannot draw a trajectory from a degenerate ensemble".into()))?;
    if ensemble.states.len() != ensemble.ancestors.len() + 1 {
        return Err(Error::Data("ensemble was filtered without history".into()));
    }
    let u: f64 = rng.random();
    let mut idx = invert_sorted(&w, std::iter::once(u))[0];
    let horizon = ensemble.states.len() - 1;
    let mut path = Vec::with_capacity(horizon + 1);
    path.push(ensemble.states[horizon][idx].clone());
    for t in (1..=horizon).rev() {
        idx = ensemble.ancestors[t - 1][idx];
        path.push(ensemble.states[t - 1][idx].clone());
    }
    path.reverse();
    Ok(path)
}

/// Proposal covariance for a log-space random walk.
///
/// Up to and including `warmup` the fixed `base` is returned. Afterwards it is
/// `(2.38² / d) Σ̂ + ε I`, with `Σ̂` the sample covariance of `history`.
pub fn adapt_proposal(history: &[Vec<f64>], iteration: usize, warmup: usize, base: &DMatrix<f64>) -> DMatrix<f64> {
    let d = base.nrows();
    if iteration <= warmup {
        return base.clone();
    }
    let mut acc = CovarianceAccumulator::new(d);
    for h in history {
        acc.push(h);
    }
    haario_scale(d) * acc.covariance() + DMatrix::identity(d, d) * ADAPT_EPSILON
}

const ADAPT_EPSILON: f64 = 1e-8;

fn haario_scale(d: usize) -> f64 {
    2.38 * 2.38 / d as f64
}

/// Running mean and covariance (Welford).
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    count: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        let x = DVector::from_column_slice(x);
        self.count += 1;
        let delta = &x - &self.mean;
        self.mean += &delta / self.count as f64;
        let delta2 = &x - &self.mean;
        self.m2 += &delta * delta2.transpose();
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Sample covariance (zero with fewer than two points).
    pub fn covariance(&self) -> DMatrix<f64> {
        if self.count < 2 {
            return DMatrix::zeros(self.mean.len(), self.mean.len());
        }
        &self.m2 / (self.count - 1) as f64
    }
}

/// Stateful version of [`adapt_proposal`] fed one chain point at a time.
#[derive(Debug, Clone)]
pub struct AdaptiveProposal {
    base: DMatrix<f64>,
    warmup: usize,
    history: CovarianceAccumulator,
}

impl AdaptiveProposal {
    /// Warmup covariance is diagonal with SDs `scale * log_scales`.
    pub fn new(log_scales: &[f64], scale: f64, warmup: usize) -> Self {
        let d = log_scales.len();
        let base = DMatrix::from_diagonal(&DVector::from_iterator(d, log_scales.iter().map(|s| (scale * s).powi(2))));
        Self {
            base,
            warmup,
            history: CovarianceAccumulator::new(d),
        }
    }

    pub fn observe(&mut self, log_theta: &[f64]) {
        self.history.push(log_theta);
    }

    pub fn covariance(&self, iteration: usize) -> DMatrix<f64> {
        let d = self.base.nrows();
        if iteration <= self.warmup {
            return self.base.clone();
        }
        haario_scale(d) * self.history.covariance() + DMatrix::identity(d, d) * ADAPT_EPSILON
    }
}

fn cholesky_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let mut jitter = 0.0;
    let d = cov.nrows();
    loop {
        let m = cov + DMatrix::identity(d, d) * jitter;
        if let Some(c) = m.cholesky() {
            return c.l();
        }
        jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmmhConfig {
    pub particles: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    /// Warmup proposal SD as a multiple of the prior log-scale.
    pub proposal_scale: f64,
    /// Store a trajectory every `thin` iterations after warmup.
    pub thin: usize,
    pub resampling: Resampling,
    pub max_init_attempts: usize,
}

impl Default for PmmhConfig {
    fn default() -> Self {
        Self {
            particles: 500,
            iterations: 50_000,
            warmup: 5_000,
            seed: 1,
            proposal_scale: 0.1,
            thin: 10,
            resampling: Resampling::Multinomial,
            max_init_attempts: 20,
        }
    }
}

/// A point in the chain, as the acceptance test sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPoint {
    pub log_theta: Vec<f64>,
    pub log_evidence: f64,
    pub log_prior: f64,
}

/// Log of the MH ratio for a symmetric random walk on `ln θ`: evidence and
/// prior ratios plus the log-Jacobian `Σ (ln θ' - ln θ)`.
pub fn log_acceptance_ratio(current: &ChainPoint, proposed: &ChainPoint) -> f64 {
    if proposed.log_prior == f64::NEG_INFINITY || proposed.log_evidence == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let jacobian: f64 = proposed
        .log_theta
        .iter()
        .zip(&current.log_theta)
        .map(|(a, b)| a - b)
        .sum();
    (proposed.log_evidence - current.log_evidence) + (proposed.log_prior - current.log_prior) + jacobian
}

/// Probability of accepting `proposed` from `current`.
pub fn acceptance_probability(current: &ChainPoint, proposed: &ChainPoint) -> f64 {
    let r = log_acceptance_ratio(current, proposed);
    if r.is_nan() {
        0.0
    } else {
        r.min(0.0).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub iteration: usize,
    pub accepted: bool,
    pub log_evidence: f64,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StoredDraw<S> {
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub trajectory: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct ChainOutput<S> {
    pub records: Vec<ChainRecord>,
    pub draws: Vec<StoredDraw<S>>,
    pub warmup: usize,
}

impl<S> ChainOutput<S> {
    pub fn acceptance_rate(&self) -> f64 {
        let post: Vec<_> = self.records.iter().filter(|r| r.iteration > self.warmup).collect();
        let pool = if post.is_empty() { self.records.iter().collect() } else { post };
        if pool.is_empty() {
            return 0.0;
        }
        pool.iter().filter(|r| r.accepted).count() as f64 / pool.len() as f64
    }

    /// Chain values after warmup.
    pub fn posterior_thetas(&self) -> impl Iterator<Item = &[f64]> {
        self.records
            .iter()
            .filter(move |r| r.iteration > self.warmup)
            .map(|r| r.theta.as_slice())
    }
}

fn filter_seed(seed: u64, iteration: u64) -> u64 {
    use rand::RngCore as _;
    stream(seed, &[tag::CHAIN, iteration]).next_u64()
}

struct Evaluated<S> {
    point: ChainPoint,
    trajectory: Option<Vec<S>>,
}

fn evaluate<M: StateSpaceModel, P: Prior>(
    model: &M,
    prior: &P,
    observations: &[Vec<M::Obs>],
    filter: &FilterConfig,
    seed: u64,
    key: u64,
    theta: &[f64],
) -> Result<Evaluated<M::State>> {
    let log_theta: Vec<f64> = theta.iter().map(|v| v.ln()).collect();
    let log_prior = prior.log_density(theta);
    let rejected = |lp| Evaluated {
        point: ChainPoint {
            log_theta: log_theta.clone(),
            log_evidence: f64::NEG_INFINITY,
            log_prior: lp,
        },
        trajectory: None,
    };
    if !log_prior.is_finite() {
        return Ok(rejected(log_prior));
    }
    let params = match model.params(theta) {
        Ok(p) => p,
        Err(_) => return Ok(rejected(log_prior)),
    };
    let fseed = filter_seed(seed, key);
    let out = match bootstrap_filter(model, &params, observations, filter, fseed) {
        Ok(out) => out,
        Err(Error::FilterCollapse { .. }) => return Ok(rejected(log_prior)),
        Err(e) => return Err(e),
    };
    let trajectory = draw_trajectory(&out.ensemble, &mut stream(seed, &[tag::TRAJECTORY, key]))?;
    Ok(Evaluated {
        point: ChainPoint {
            log_theta,
            log_evidence: out.log_evidence,
            log_prior,
        },
        trajectory: Some(trajectory),
    })
}

/// Particle-marginal Metropolis-Hastings.
///
/// Random walk on `ln θ`; the particle-filter evidence of the current point is
/// carried forward, never recomputed. A trajectory is drawn from every
/// accepted proposal's filter, and `(θ, trajectory)` pairs are stored every
/// `thin` iterations after warmup.
pub fn pmmh<M: StateSpaceModel, P: Prior>(
    model: &M,
    prior: &P,
    observations: &[Vec<M::Obs>],
    config: &PmmhConfig,
) -> Result<ChainOutput<M::State>> {
    pmmh_with_progress(model, prior, observations, config, |_| {})
}

/// [`pmmh`] with a callback after every iteration.
pub fn pmmh_with_progress<M: StateSpaceModel, P: Prior>(
    model: &M,
    prior: &P,
    observations: &[Vec<M::Obs>],
    config: &PmmhConfig,
    mut progress: impl FnMut(&ChainRecord),
) -> Result<ChainOutput<M::State>> {
    if config.iterations == 0 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    if config.thin == 0 {
        return Err(Error::Config("thin must be at least 1".into()));
    }
    let d = prior.dim();
    let filter = FilterConfig {
        particles: config.particles,
        resampling: config.resampling,
        store_history: true,
    };

    // Start from the prior's initial point, then fall back to prior draws.
    let mut start = None;
    let mut last_reason = String::from("no attempts made");
    for attempt in 0..=config.max_init_attempts {
        let theta = if attempt == 0 {
            prior.initial()
        } else {
            prior.sample(&mut stream(config.seed, &[tag::INIT, attempt as u64]))
        };
        let key = u64::MAX - attempt as u64;
        let ev = evaluate(model, prior, observations, &filter, config.seed, key, &theta)?;
        if ev.point.log_evidence.is_finite() && ev.point.log_prior.is_finite() {
            start = Some((theta, ev));
            break;
        }
        last_reason = format!(
            "attempt {attempt}: log-evidence {} log-prior {}",
            ev.point.log_evidence, ev.point.log_prior
        );
    }
    let (mut theta, ev) = start.ok_or_else(|| {
        Error::Startup(format!(
            "no finite likelihood after {} attempts ({last_reason})",
            config.max_init_attempts + 1
        ))
    })?;
    let mut point = ev.point;
    let mut trajectory = ev.trajectory.expect("finite evidence carries a trajectory");

    let mut proposal = AdaptiveProposal::new(&prior.log_scales(), config.proposal_scale, config.warmup);
    proposal.observe(&point.log_theta);
    let mut chain_rng = stream(config.seed, &[tag::CHAIN]);
    let mut records = Vec::with_capacity(config.iterations);
    let mut draws = Vec::new();

    for iteration in 1..=config.iterations {
        let chol = cholesky_factor(&proposal.covariance(iteration));
        let z = DVector::from_iterator(d, (0..d).map(|_| chain_rng.sample::<f64, _>(StandardNormal)));
        let step = chol * z;
        let proposed_theta: Vec<f64> = point
            .log_theta
            .iter()
            .zip(step.iter())
            .map(|(l, s)| (l + s).exp())
            .collect();
        let u: f64 = chain_rng.random();

        let cand = evaluate(model, prior, observations, &filter, config.seed, iteration as u64, &proposed_theta)?;
        let alpha = acceptance_probability(&point, &cand.point);
        let accepted = u < alpha;
        if accepted {
            theta = proposed_theta;
            point = cand.point;
            trajectory = cand.trajectory.expect("accepted point has a trajectory");
        }
        proposal.observe(&point.log_theta);

        let record = ChainRecord {
            iteration,
            accepted,
            log_evidence: point.log_evidence,
            theta: theta.clone(),
        };
        progress(&record);
        records.push(record);
        if iteration > config.warmup && (iteration - config.warmup).is_multiple_of(config.thin) {
            draws.push(StoredDraw {
                iteration,
                theta: theta.clone(),
                trajectory: trajectory.clone(),
            });
        }
    }

    Ok(ChainOutput {
        records,
        draws,
        warmup: config.warmup,
    })
}
