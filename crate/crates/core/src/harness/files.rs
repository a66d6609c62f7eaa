//! CSV forms of chains, trajectories and posterior draws.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::npzd::NpzdState;
use crate::prior::{THETA_DIM, THETA_NAMES};
use crate::smc::ChainRecord;

use super::summary::{state_from_values, state_values, STATE_COLUMNS};

fn flush<W: Write>(mut w: csv::Writer<W>, what: &str) -> Result<()> {
    w.flush().map_err(|e| Error::io(what, e))
}

pub(crate) fn chain_header() -> Vec<&'static str> {
    let mut header = vec!["iteration", "accepted", "ln_evidence"];
    header.extend(THETA_NAMES);
    header
}

pub(crate) fn chain_row(r: &ChainRecord) -> Vec<String> {
    let mut row = vec![r.iteration.to_string(), u8::from(r.accepted).to_string(), r.log_evidence.to_string()];
    row.extend(r.theta.iter().map(f64::to_string));
    row
}

/// `iteration,accepted,ln_evidence,<θ names>`, one row per iteration.
pub fn write_chain<W: Write>(writer: W, records: &[ChainRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(chain_header())?;
    for r in records {
        w.write_record(chain_row(r))?;
    }
    flush(w, "<chain>")
}

fn check_header(rdr: &mut csv::Reader<impl Read>, source: &str, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| Error::parse(source, 1, e.to_string()))?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::parse(source, 1, format!("expected header {}", expected.join(","))));
    }
    Ok(())
}

fn records<R: Read>(
    rdr: &mut csv::Reader<R>,
    source: &str,
    mut f: impl FnMut(&csv::StringRecord, usize) -> Result<()>,
) -> Result<()> {
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(source, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        f(&record, line)?;
    }
    Ok(())
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize, source: &str, line: usize) -> Result<T> {
    record[i]
        .parse()
        .map_err(|_| Error::parse(source, line, format!("invalid value {:?} in column {}", &record[i], i + 1)))
}

pub fn parse_chain<R: Read>(reader: R, source: &str) -> Result<Vec<ChainRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(&mut rdr, source, &chain_header())?;
    let mut out = Vec::new();
    records(&mut rdr, source, |r, line| {
        let accepted: u8 = field(r, 1, source, line)?;
        out.push(ChainRecord {
            iteration: field(r, 0, source, line)?,
            accepted: accepted != 0,
            log_evidence: field(r, 2, source, line)?,
            theta: (3..3 + THETA_DIM).map(|i| field(r, i, source, line)).collect::<Result<_>>()?,
        });
        Ok(())
    })?;
    Ok(out)
}

/// A stored posterior sample: θ plus one smoothed state trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraw {
    pub iteration: usize,
    pub theta: Vec<f64>,
    /// States on consecutive days from `first_day`.
    pub first_day: usize,
    pub trajectory: Vec<NpzdState>,
}

/// Per-day states of several trajectories: `draw,iteration,day,<state columns>`.
pub fn write_draws<W: Write>(writer: W, draws: &[PosteriorDraw]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["draw", "iteration", "day"];
    header.extend(STATE_COLUMNS);
    w.write_record(&header)?;
    for (k, d) in draws.iter().enumerate() {
        for (t, s) in d.trajectory.iter().enumerate() {
            let mut row = vec![k.to_string(), d.iteration.to_string(), (d.first_day + t).to_string()];
            row.extend(state_values(s).iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    flush(w, "<draws>")
}

/// `draw,iteration,<θ names>`.
pub fn write_posterior_thetas<W: Write>(writer: W, draws: &[PosteriorDraw]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["draw", "iteration"];
    header.extend(THETA_NAMES);
    w.write_record(&header)?;
    for (k, d) in draws.iter().enumerate() {
        let mut row = vec![k.to_string(), d.iteration.to_string()];
        row.extend(d.theta.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    flush(w, "<posterior draws>")
}

/// Read a draws file. Each draw must cover consecutive days. The returned
/// draws have empty `theta`; see [`attach_thetas`].
pub fn parse_draws<R: Read>(reader: R, source: &str) -> Result<Vec<PosteriorDraw>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut header = vec!["draw", "iteration", "day"];
    header.extend(STATE_COLUMNS);
    check_header(&mut rdr, source, &header)?;
    let mut out: Vec<PosteriorDraw> = Vec::new();
    records(&mut rdr, source, |r, line| {
        let draw: usize = field(r, 0, source, line)?;
        let iteration: usize = field(r, 1, source, line)?;
        let day: usize = field(r, 2, source, line)?;
        let mut v = [0.0f64; 14];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = field(r, 3 + k, source, line)?;
            if !slot.is_finite() {
                return Err(Error::parse(source, line, "state values must be finite"));
            }
        }
        let state = state_from_values(&v);
        if draw == out.len() {
            out.push(PosteriorDraw {
                iteration,
                theta: Vec::new(),
                first_day: day,
                trajectory: vec![state],
            });
            return Ok(());
        }
        if draw + 1 != out.len() {
            return Err(Error::parse(source, line, format!("draw index {draw} out of sequence")));
        }
        let cur = out.last_mut().expect("draw + 1 == len");
        if cur.iteration != iteration || day != cur.first_day + cur.trajectory.len() {
            return Err(Error::parse(source, line, format!("day {day} of draw {draw} is out of sequence")));
        }
        cur.trajectory.push(state);
        Ok(())
    })?;
    if out.windows(2).any(|w| w[0].trajectory.len() != w[1].trajectory.len() || w[0].first_day != w[1].first_day) {
        return Err(Error::Data(format!("{source}: draws cover different days")));
    }
    Ok(out)
}

/// Read `(iteration, θ)` rows of a posterior draws file.
pub fn parse_posterior_thetas<R: Read>(reader: R, source: &str) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut header = vec!["draw", "iteration"];
    header.extend(THETA_NAMES);
    check_header(&mut rdr, source, &header)?;
    let mut out = Vec::new();
    records(&mut rdr, source, |r, line| {
        let draw: usize = field(r, 0, source, line)?;
        if draw != out.len() {
            return Err(Error::parse(source, line, format!("draw index {draw} out of sequence")));
        }
        let theta: Vec<f64> = (2..2 + THETA_DIM).map(|i| field(r, i, source, line)).collect::<Result<_>>()?;
        out.push((field(r, 1, source, line)?, theta));
        Ok(())
    })?;
    Ok(out)
}

pub fn attach_thetas(draws: &mut [PosteriorDraw], thetas: Vec<(usize, Vec<f64>)>) -> Result<()> {
    if draws.len() != thetas.len() {
        return Err(Error::Data(format!(
            "{} trajectories but {} parameter draws",
            draws.len(),
            thetas.len()
        )));
    }
    for (d, (it, theta)) in draws.iter_mut().zip(thetas) {
        if d.iteration != it {
            return Err(Error::Data(format!(
                "trajectory from iteration {} paired with parameters from iteration {it}",
                d.iteration
            )));
        }
        d.theta = theta;
    }
    Ok(())
}

/// One trajectory: `day,<state columns>`.
pub fn write_trajectory<W: Write>(writer: W, first_day: usize, states: &[NpzdState]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["day"];
    header.extend(STATE_COLUMNS);
    w.write_record(&header)?;
    for (t, s) in states.iter().enumerate() {
        let mut row = vec![(first_day + t).to_string()];
        row.extend(state_values(s).iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    flush(w, "<trajectory>")
}

pub fn parse_trajectory<R: Read>(reader: R, source: &str) -> Result<(usize, Vec<NpzdState>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut header = vec!["day"];
    header.extend(STATE_COLUMNS);
    check_header(&mut rdr, source, &header)?;
    let mut first = None;
    let mut out = Vec::new();
    records(&mut rdr, source, |r, line| {
        let day: usize = field(r, 0, source, line)?;
        let first_day = *first.get_or_insert(day);
        if day != first_day + out.len() {
            return Err(Error::parse(source, line, format!("day {day} out of sequence")));
        }
        let mut v = [0.0f64; 14];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = field(r, 1 + k, source, line)?;
        }
        out.push(state_from_values(&v));
        Ok(())
    })?;
    Ok((first.unwrap_or(0), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BgcVector, StateVector};

    fn state(v: f64) -> NpzdState {
        NpzdState {
            x: StateVector::new(v, 0.1 * v, 0.2, 1.0 / 3.0),
            b: BgcVector::from_array([v.sqrt(); 9]),
            chla: std::f64::consts::PI * v,
        }
    }

    fn draws() -> Vec<PosteriorDraw> {
        (0..3)
            .map(|k| PosteriorDraw {
                iteration: 100 + 10 * k,
                theta: (0..THETA_DIM).map(|i| (i + k) as f64 / 7.0).collect(),
                first_day: 5,
                trajectory: (0..4).map(|d| state((d + k) as f64 + 0.1)).collect(),
            })
            .collect()
    }

    #[test]
    fn draws_round_trip_exactly() {
        let d = draws();
        let mut states = Vec::new();
        let mut thetas = Vec::new();
        write_draws(&mut states, &d).unwrap();
        write_posterior_thetas(&mut thetas, &d).unwrap();
        let mut back = parse_draws(states.as_slice(), "s").unwrap();
        attach_thetas(&mut back, parse_posterior_thetas(thetas.as_slice(), "t").unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn chain_round_trip() {
        let records: Vec<ChainRecord> = (1..4)
            .map(|i| ChainRecord {
                iteration: i,
                accepted: i % 2 == 0,
                log_evidence: -1234.5678901234 * i as f64,
                theta: vec![0.1 * i as f64; THETA_DIM],
            })
            .collect();
        let mut buf = Vec::new();
        write_chain(&mut buf, &records).unwrap();
        assert_eq!(parse_chain(buf.as_slice(), "c").unwrap(), records);
    }

    #[test]
    fn trajectory_round_trip() {
        let states: Vec<NpzdState> = (0..6).map(|d| state(d as f64)).collect();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, 9, &states).unwrap();
        assert_eq!(parse_trajectory(buf.as_slice(), "tr").unwrap(), (9, states));
    }

    #[test]
    fn malformed_draws_rejected() {
        let mut buf = Vec::new();
        write_draws(&mut buf, &draws()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(2, 3);
        let swapped = lines.join("\n");
        assert!(matches!(parse_draws(swapped.as_bytes(), "x"), Err(Error::Parse { line: 3, .. })));
        let truncated: String = text.lines().take(7).collect::<Vec<_>>().join("\n");
        assert!(parse_draws(truncated.as_bytes(), "x").is_err());
        assert!(parse_draws("draw,day\n".as_bytes(), "x").is_err());
        let mut d = draws();
        d[1].iteration = 1;
        let thetas = parse_posterior_thetas(
            {
                let mut b = Vec::new();
                write_posterior_thetas(&mut b, &draws()).unwrap();
                b
            }
            .as_slice(),
            "t",
        )
        .unwrap();
        assert!(attach_thetas(&mut d, thetas).is_err());
    }
}
