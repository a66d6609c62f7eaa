//! Data level: lognormal multiplicative observation error on the state and on
//! diagnostic chlorophyll-a.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BgcVector, StateVector};

/// Model values below this are raised to it before taking logs.
pub const DEFAULT_MODEL_FLOOR: f64 = 1e-6;

/// Observable quantity. The nine community processes have reserved names so
/// files mentioning them parse, but they carry no likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObsVariable {
    Din,
    Chla,
    P,
    Z,
    D,
    Reserved(usize),
}

impl ObsVariable {
    pub const OBSERVABLE: [ObsVariable; 5] = [
        ObsVariable::Din,
        ObsVariable::Chla,
        ObsVariable::P,
        ObsVariable::Z,
        ObsVariable::D,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ObsVariable::Din => "din",
            ObsVariable::Chla => "chla",
            ObsVariable::P => "p",
            ObsVariable::Z => "z",
            ObsVariable::D => "d",
            ObsVariable::Reserved(k) => BgcVector::NAMES[*k],
        }
    }

    pub fn is_reserved(&self) -> bool {
        matches!(self, ObsVariable::Reserved(_))
    }
}

impl fmt::Display for ObsVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObsVariable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(match lower.as_str() {
            "din" | "n" => ObsVariable::Din,
            "chla" => ObsVariable::Chla,
            "p" => ObsVariable::P,
            "z" => ObsVariable::Z,
            "d" => ObsVariable::D,
            other => match BgcVector::NAMES.iter().position(|n| *n == other) {
                Some(k) => ObsVariable::Reserved(k),
                None => return Err(format!("unknown variable {s:?}")),
            },
        })
    }
}

impl Serialize for ObsVariable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ObsVariable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub day: usize,
    pub variable: ObsVariable,
    pub value: f64,
}

/// What the data model sees of one model state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub x: StateVector,
    pub chla: f64,
}

impl Observable {
    pub fn value(&self, var: ObsVariable) -> Option<f64> {
        match var {
            ObsVariable::Din => Some(self.x.n),
            ObsVariable::Chla => Some(self.chla),
            ObsVariable::P => Some(self.x.p),
            ObsVariable::Z => Some(self.x.z),
            ObsVariable::D => Some(self.x.d),
            ObsVariable::Reserved(_) => None,
        }
    }
}

/// SD of the log observation error, per variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObsNoise {
    pub din: f64,
    pub chla: f64,
    pub p: f64,
    pub z: f64,
    pub d: f64,
}

impl ObsNoise {
    /// Twin-experiment noise: 0.1 for DIN, 0.2 elsewhere.
    pub fn twin() -> Self {
        Self {
            din: 0.1,
            chla: 0.2,
            p: 0.2,
            z: 0.2,
            d: 0.2,
        }
    }

    /// Field-data noise: a CV of 0.5 on every variable.
    pub fn field() -> Self {
        Self::uniform(cv_to_sigma_log(0.5))
    }

    pub fn uniform(sigma: f64) -> Self {
        Self {
            din: sigma,
            chla: sigma,
            p: sigma,
            z: sigma,
            d: sigma,
        }
    }

    pub fn sigma(&self, var: ObsVariable) -> f64 {
        match var {
            ObsVariable::Din => self.din,
            ObsVariable::Chla => self.chla,
            ObsVariable::P => self.p,
            ObsVariable::Z => self.z,
            ObsVariable::D => self.d,
            ObsVariable::Reserved(_) => f64::NAN,
        }
    }

    pub fn validate(&self, allow_zero: bool) -> Result<()> {
        for var in ObsVariable::OBSERVABLE {
            let s = self.sigma(var);
            let ok = if allow_zero { s >= 0.0 } else { s > 0.0 };
            if !(ok && s.is_finite()) {
                return Err(Error::Config(format!("observation sigma for {var} is invalid: {s}")));
            }
        }
        Ok(())
    }
}

impl Default for ObsNoise {
    fn default() -> Self {
        Self::twin()
    }
}

/// SD of log error giving coefficient of variation `cv` for a lognormal.
pub fn cv_to_sigma_log(cv: f64) -> f64 {
    (cv * cv).ln_1p().sqrt()
}

pub fn sigma_log_to_cv(sigma: f64) -> f64 {
    (sigma * sigma).exp_m1().sqrt()
}

/// Draw noisy observations of `truth` on `schedule`. `truth[k]` is the state on
/// day `start_day + k`.
pub fn synth_observations<R: Rng + ?Sized>(
    truth: &[Observable],
    start_day: usize,
    noise: &ObsNoise,
    schedule: &[(usize, ObsVariable)],
    rng: &mut R,
) -> Result<Vec<Observation>> {
    schedule
        .iter()
        .map(|&(day, variable)| {
            let state = day
                .checked_sub(start_day)
                .and_then(|k| truth.get(k))
                .ok_or_else(|| Error::Data(format!("schedule day {day} is not covered by the truth run")))?;
            let value = state
                .value(variable)
                .ok_or_else(|| Error::Data(format!("variable {variable} cannot be observed")))?;
            let xi: f64 = rng.sample(StandardNormal);
            Ok(Observation {
                day,
                variable,
                value: value * (noise.sigma(variable) * xi).exp(),
            })
        })
        .collect()
}

/// Lognormal log-density of one observation given the model value.
pub fn lognormal_logpdf(obs: f64, model_value: f64, sigma: f64) -> f64 {
    let u = (obs.ln() - model_value.ln()) / sigma;
    -(obs * sigma * (2.0 * PI).sqrt()).ln() - 0.5 * u * u
}

/// Log-likelihood of all observations on one day. Reserved variables and an
/// empty slice contribute zero.
pub fn obs_loglik(obs: &[Observation], state: &Observable, noise: &ObsNoise, floor: f64) -> f64 {
    obs.iter()
        .filter_map(|o| {
            let model_value = state.value(o.variable)?;
            Some(lognormal_logpdf(o.value, model_value.max(floor), noise.sigma(o.variable)))
        })
        .sum()
}

/// Bucket observations by day offset over `start_day..=end_day`. Observations
/// outside the window are dropped; the count is returned alongside.
pub fn group_by_day(obs: &[Observation], start_day: usize, end_day: usize) -> (Vec<Vec<Observation>>, usize) {
    let mut out = vec![Vec::new(); end_day.saturating_sub(start_day) + 1];
    let mut dropped = 0;
    for o in obs {
        if o.day < start_day || o.day > end_day {
            dropped += 1;
        } else {
            out[o.day - start_day].push(*o);
        }
    }
    (out, dropped)
}

#[derive(Debug, Deserialize)]
struct ObsRow {
    day: String,
    variable: String,
    value: String,
}

/// Parse an observation CSV (`day,variable,value`).
pub fn parse_observations<R: Read>(reader: R, source_name: &str) -> Result<Vec<Observation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(source_name, 1, e.to_string()))?
        .clone();
    let names: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    if names != ["day", "variable", "value"] {
        return Err(Error::parse(
            source_name,
            1,
            format!("expected header day,variable,value, found {}", names.join(",")),
        ));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(source_name, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let row: ObsRow = record
            .deserialize(Some(&headers))
            .map_err(|e| Error::parse(source_name, line, e.to_string()))?;
        let day = row
            .day
            .parse::<usize>()
            .map_err(|_| Error::parse(source_name, line, format!("invalid day {:?}", row.day)))?;
        let variable = row
            .variable
            .parse::<ObsVariable>()
            .map_err(|e| Error::parse(source_name, line, e))?;
        let value = row
            .value
            .parse::<f64>()
            .map_err(|_| Error::parse(source_name, line, format!("invalid value {:?}", row.value)))?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::parse(
                source_name,
                line,
                format!("observation values must be positive and finite, got {value}"),
            ));
        }
        out.push(Observation { day, variable, value });
    }
    out.sort_by_key(|o| (o.day, o.variable));
    Ok(out)
}

pub fn read_observations(path: &Path) -> Result<Vec<Observation>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_observations(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn write_observations<W: Write>(writer: W, obs: &[Observation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["day", "variable", "value"])?;
    for o in obs {
        w.write_record([o.day.to_string(), o.variable.to_string(), format!("{:e}", o.value)])?;
    }
    w.flush().map_err(|e| Error::io("<observations>", e))?;
    Ok(())
}
