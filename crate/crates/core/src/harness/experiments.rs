//! Prior ensembles, twin experiments, inference on observations and
//! forecasts, plus writing their outputs to a directory.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::StateVector;
use crate::npzd::{shifted_truth, NpzdModel, NpzdState};
use crate::obs::{group_by_day, synth_observations, write_observations, Observable, Observation};
use crate::prior::{sample_prior, PriorSpec};
use crate::rng::{stream, tag};
use crate::smc::{pmmh_with_progress, ChainRecord, StateSpaceModel};

use super::config::{ExperimentConfig, Span};
use super::files::{
    attach_thetas, chain_header, chain_row, parse_draws, parse_posterior_thetas, write_draws, write_posterior_thetas,
    write_trajectory, PosteriorDraw,
};
use super::forcing::ForcingSeries;
use super::summary::{summarize_trajectories, write_quantiles, QuantileSummary};

pub const CHAIN_FILE: &str = "chain.csv";
pub const QUANTILES_FILE: &str = "state_quantiles.csv";
pub const DRAWS_FILE: &str = "trajectories/draws.csv";
pub const THETAS_FILE: &str = "posterior_draws.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const CONFIG_FILE: &str = "config_resolved.json";
pub const PRIORS_FILE: &str = "priors_resolved.json";

/// A configuration with its forcing and priors loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub forcing: ForcingSeries,
    pub prior: PriorSpec,
}

impl Experiment {
    pub fn load(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let forcing = config.load_forcing()?;
        let prior = config.load_priors()?;
        let mut config = config;
        config.hindcast = Some(config.hindcast_span(forcing.len())?);
        if config.forecast.is_some() {
            config.forecast_span(forcing.len())?;
        }
        Ok(Self { config, forcing, prior })
    }

    pub fn hindcast(&self) -> Span {
        self.config.hindcast.expect("resolved on load")
    }

    pub fn model(&self, start_day: usize) -> Result<NpzdModel<'_>> {
        NpzdModel::new(&self.forcing.records, start_day, self.config.model.clone(), self.prior.clone())
    }
}

fn annotate(e: Error, what: &str) -> Error {
    match e {
        Error::Domain(s) => Error::Domain(format!("{what}: {s}")),
        Error::Integration { step, reason } => Error::Integration {
            step,
            reason: format!("{what}: {reason}"),
        },
        other => other,
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleOutput {
    pub span: Span,
    /// One θ and one trajectory per member.
    pub members: Vec<PosteriorDraw>,
    pub summary: QuantileSummary,
}

/// Free-running ensemble: θ from the prior (or the configured fixed θ),
/// stationary B, X from the initial law; no assimilation.
pub fn run_prior_ensemble(exp: &Experiment, span: Span) -> Result<EnsembleOutput> {
    let model = exp.model(span.start)?;
    let steps = span.end - span.start;
    let members: Vec<Result<PosteriorDraw>> = (0..exp.config.ensemble_size)
        .into_par_iter()
        .map(|m| {
            let mut rng = stream(exp.config.seed, &[tag::ENSEMBLE, m as u64]);
            let (theta, params) = match &exp.config.theta {
                Some(theta) => (theta.clone(), model.params(theta)?),
                None => loop {
                    let theta = sample_prior(&exp.prior, &mut rng).to_vec();
                    if let Ok(p) = model.params(&theta) {
                        break (theta, p);
                    }
                },
            };
            let trajectory = model
                .simulate(&params, steps, &mut rng)
                .map_err(|e| annotate(e, &format!("ensemble member {m}")))?;
            Ok(PosteriorDraw {
                iteration: 0,
                theta,
                first_day: span.start,
                trajectory,
            })
        })
        .collect();
    let members = members.into_iter().collect::<Result<Vec<_>>>()?;
    let trajectories: Vec<Vec<NpzdState>> = members.iter().map(|m| m.trajectory.clone()).collect();
    let summary = summarize_trajectories(&trajectories, span.start)?;
    Ok(EnsembleOutput { span, members, summary })
}

#[derive(Debug, Clone)]
pub struct InferOutput {
    pub span: Span,
    pub records: Vec<ChainRecord>,
    pub warmup: usize,
    pub draws: Vec<PosteriorDraw>,
    pub summary: QuantileSummary,
}

impl InferOutput {
    pub fn acceptance_rate(&self) -> f64 {
        let post: Vec<_> = self.records.iter().filter(|r| r.iteration > self.warmup).collect();
        post.iter().filter(|r| r.accepted).count() as f64 / post.len().max(1) as f64
    }
}

/// PMMH on the hindcast span against `observations` (absolute forcing days).
/// `on_record` sees every chain record as it is produced.
pub fn run_infer_streaming(
    exp: &Experiment,
    observations: &[Observation],
    on_record: impl FnMut(&ChainRecord),
) -> Result<InferOutput> {
    let span = exp.hindcast();
    let cfg = exp.config.pmmh();
    if cfg.iterations - cfg.warmup < cfg.thin {
        return Err(Error::Config(format!(
            "no trajectories would be stored: {} post-warmup iterations with thin {}",
            cfg.iterations - cfg.warmup,
            cfg.thin
        )));
    }
    let reserved = observations.iter().filter(|o| o.variable.is_reserved()).count();
    if reserved > 0 {
        log::warn!("ignoring {reserved} observations of community properties (no likelihood is defined for them)");
    }
    let usable: Vec<Observation> = observations.iter().filter(|o| !o.variable.is_reserved()).copied().collect();
    let (by_day, dropped) = group_by_day(&usable, span.start, span.end);
    if dropped > 0 {
        log::warn!(
            "{dropped} observations fall outside the assimilation window {}..={}",
            span.start,
            span.end
        );
    }
    let model = exp.model(span.start)?;
    let chain = pmmh_with_progress(&model, &exp.prior, &by_day, &cfg, on_record)?;
    let draws: Vec<PosteriorDraw> = chain
        .draws
        .into_iter()
        .map(|d| PosteriorDraw {
            iteration: d.iteration,
            theta: d.theta,
            first_day: span.start,
            trajectory: d.trajectory,
        })
        .collect();
    let trajectories: Vec<Vec<NpzdState>> = draws.iter().map(|d| d.trajectory.clone()).collect();
    let summary = summarize_trajectories(&trajectories, span.start)?;
    Ok(InferOutput {
        span,
        records: chain.records,
        warmup: chain.warmup,
        draws,
        summary,
    })
}

pub fn run_infer(exp: &Experiment, observations: &[Observation]) -> Result<InferOutput> {
    run_infer_streaming(exp, observations, |_| {})
}

#[derive(Debug, Clone)]
pub struct TwinTruth {
    pub span: Span,
    pub theta: Vec<f64>,
    pub states: Vec<NpzdState>,
    pub observations: Vec<Observation>,
}

/// Simulate the twin truth at shifted parameters and observe it.
pub fn twin_truth(exp: &Experiment) -> Result<TwinTruth> {
    let span = exp.hindcast();
    let model = exp.model(span.start)?;
    let theta = shifted_truth(&exp.prior, exp.config.truth_shift);
    let params = model.params(&theta)?;
    let states = model
        .simulate(&params, span.end - span.start, &mut stream(exp.config.seed, &[tag::TRUTH]))
        .map_err(|e| annotate(e, "twin truth"))?;
    // Observe the floored truth so the data model matches the likelihood.
    let floor = exp.config.model.model_floor;
    let observable: Vec<Observable> = states
        .iter()
        .map(|s| Observable {
            x: StateVector::new(s.x.n.max(floor), s.x.p.max(floor), s.x.z.max(floor), s.x.d.max(floor)),
            chla: s.chla.max(floor),
        })
        .collect();
    let schedule = exp.config.schedule.expand(span, exp.config.seed);
    let observations = synth_observations(
        &observable,
        span.start,
        &exp.config.model.obs_noise,
        &schedule,
        &mut stream(exp.config.seed, &[tag::OBSERVATION]),
    )?;
    Ok(TwinTruth {
        span,
        theta,
        states,
        observations,
    })
}

#[derive(Debug, Clone)]
pub struct TwinOutput {
    pub truth: TwinTruth,
    pub inference: InferOutput,
}

pub fn run_twin(exp: &Experiment) -> Result<TwinOutput> {
    let truth = twin_truth(exp)?;
    let inference = run_infer(exp, &truth.observations)?;
    Ok(TwinOutput { truth, inference })
}

#[derive(Debug, Clone)]
pub struct ForecastOutput {
    /// First summarised day: the last assimilated day.
    pub first_day: usize,
    pub members: Vec<PosteriorDraw>,
    pub summary: QuantileSummary,
}

/// Evenly spaced subset of `n` items out of `len`.
fn spread(len: usize, n: usize) -> Vec<usize> {
    if n >= len {
        return (0..len).collect();
    }
    (0..n).map(|k| k * len / n).collect()
}

/// Continue each posterior draw from its final hindcast state with its own θ
/// through the forecast span, without assimilation.
pub fn run_forecast(exp: &Experiment, draws: &[PosteriorDraw]) -> Result<ForecastOutput> {
    let hind = exp.hindcast();
    let fspan = exp.config.forecast_span(exp.forcing.len())?;
    if draws.is_empty() {
        return Err(Error::Data("no posterior draws to forecast from".into()));
    }
    for d in draws {
        let last = d.first_day + d.trajectory.len();
        if d.trajectory.is_empty() || last - 1 != hind.end {
            return Err(Error::Data(format!(
                "posterior draw from iteration {} ends on day {}, not on the last assimilated day {}",
                d.iteration,
                last.saturating_sub(1),
                hind.end
            )));
        }
    }
    let chosen = spread(draws.len(), exp.config.forecast_draws.unwrap_or(draws.len()));
    let model = exp.model(hind.end)?;
    let steps = fspan.end - hind.end;
    let members: Vec<Result<PosteriorDraw>> = chosen
        .par_iter()
        .map(|&k| {
            let d = &draws[k];
            let params = model.params(&d.theta)?;
            let start = *d.trajectory.last().expect("checked non-empty");
            let mut rng = stream(exp.config.seed, &[tag::FORECAST, k as u64]);
            let trajectory = model
                .simulate_from(start, &params, steps, &mut rng)
                .map_err(|e| annotate(e, &format!("forecast of draw {k}")))?;
            Ok(PosteriorDraw {
                iteration: d.iteration,
                theta: d.theta.clone(),
                first_day: hind.end,
                trajectory,
            })
        })
        .collect();
    let members = members.into_iter().collect::<Result<Vec<_>>>()?;
    let trajectories: Vec<Vec<NpzdState>> = members.iter().map(|m| m.trajectory.clone()).collect();
    let summary = summarize_trajectories(&trajectories, hind.end)?;
    Ok(ForecastOutput {
        first_day: hind.end,
        members,
        summary,
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(&path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

fn write_resolved(exp: &Experiment, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(out, CONFIG_FILE, &exp.config.to_json())?;
    write_text(out, PRIORS_FILE, &exp.prior.to_json())
}

fn write_posterior(out: &Path, draws: &[PosteriorDraw], summary: &QuantileSummary) -> Result<()> {
    summary.check_ordering()?;
    write_quantiles(create(out, QUANTILES_FILE)?, summary)?;
    write_draws(create(out, DRAWS_FILE)?, draws)?;
    write_posterior_thetas(create(out, THETAS_FILE)?, draws)
}

/// `simulate`: prior ensemble over the hindcast span.
pub fn simulate_to_dir(exp: &Experiment, out: &Path) -> Result<EnsembleOutput> {
    write_resolved(exp, out)?;
    let ens = run_prior_ensemble(exp, exp.hindcast())?;
    write_posterior(out, &ens.members, &ens.summary)?;
    Ok(ens)
}

/// Chain CSV written row by row while the sampler runs.
struct ChainStream {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
    error: Option<Error>,
}

impl ChainStream {
    fn create(out: &Path) -> Result<Self> {
        let path = out.join(CHAIN_FILE);
        let writer = csv::Writer::from_writer(create(out, CHAIN_FILE)?);
        let mut s = Self {
            path,
            writer,
            error: None,
        };
        s.writer.write_record(chain_header())?;
        Ok(s)
    }

    fn push(&mut self, r: &ChainRecord) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = self.writer.write_record(chain_row(r)) {
            self.error = Some(e.into());
        }
        if r.iteration.is_multiple_of(100) {
            log::info!("iteration {} ln_evidence {:.3}", r.iteration, r.log_evidence);
        }
    }

    fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error {
            return Err(e);
        }
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn infer_into(exp: &Experiment, observations: &[Observation], out: &Path) -> Result<InferOutput> {
    let mut chain = ChainStream::create(out)?;
    let res = run_infer_streaming(exp, observations, |r| chain.push(r));
    chain.finish()?;
    let res = res?;
    log::info!("acceptance rate after warmup: {:.3}", res.acceptance_rate());
    write_posterior(out, &res.draws, &res.summary)?;
    Ok(res)
}

/// `infer`: PMMH against observations read from a file.
pub fn infer_to_dir(exp: &Experiment, observations: &[Observation], out: &Path) -> Result<InferOutput> {
    write_resolved(exp, out)?;
    infer_into(exp, observations, out)
}

/// `twin`: truth, synthetic observations, then inference.
pub fn twin_to_dir(exp: &Experiment, out: &Path) -> Result<TwinOutput> {
    write_resolved(exp, out)?;
    let truth = twin_truth(exp)?;
    write_trajectory(create(out, TRUTH_FILE)?, truth.span.start, &truth.states)?;
    write_observations(create(out, OBSERVATIONS_FILE)?, &truth.observations)?;
    let inference = infer_into(exp, &truth.observations, out)?;
    Ok(TwinOutput { truth, inference })
}

/// Read the posterior draws written by `infer`, `twin` or `simulate`.
pub fn read_posterior_dir(dir: &Path) -> Result<Vec<PosteriorDraw>> {
    let open = |name: &str| {
        let path = dir.join(name);
        File::open(&path)
            .map(std::io::BufReader::new)
            .map_err(|e| Error::io(path, e))
    };
    let source = |name: &str| dir.join(name).display().to_string();
    let mut draws = parse_draws(open(DRAWS_FILE)?, &source(DRAWS_FILE))?;
    let thetas = parse_posterior_thetas(open(THETAS_FILE)?, &source(THETAS_FILE))?;
    attach_thetas(&mut draws, thetas)?;
    Ok(draws)
}

/// `forecast`: continue the draws stored in `input` through the forecast span.
pub fn forecast_to_dir(exp: &Experiment, input: &Path, out: &Path) -> Result<ForecastOutput> {
    let draws = read_posterior_dir(input)?;
    write_resolved(exp, out)?;
    let fc = run_forecast(exp, &draws)?;
    write_posterior(out, &fc.members, &fc.summary)?;
    Ok(fc)
}

/// `summarize`: quantiles of a draws file.
pub fn summarize_file(input: &Path, out: &Path) -> Result<QuantileSummary> {
    let file = File::open(input).map_err(|e| Error::io(input, e))?;
    let draws = parse_draws(std::io::BufReader::new(file), &input.display().to_string())?;
    let first = draws
        .first()
        .map(|d| d.first_day)
        .ok_or_else(|| Error::Data(format!("{}: no draws", input.display())))?;
    let trajectories: Vec<Vec<NpzdState>> = draws.into_iter().map(|d| d.trajectory).collect();
    let summary = summarize_trajectories(&trajectories, first)?;
    summary.check_ordering()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_quantiles(create(out, QUANTILES_FILE)?, &summary)?;
    Ok(summary)
}
