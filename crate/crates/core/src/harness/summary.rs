//! Ensemble quantile summaries and their CSV form.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::BgcVector;
use crate::npzd::NpzdState;

/// Probabilities reported in every summary.
pub const SUMMARY_PROBS: [f64; 3] = [0.025, 0.5, 0.975];

/// Per-day state columns in output files: observables first, then B.
pub const STATE_COLUMNS: [&str; 14] = [
    "din",
    "p",
    "z",
    "d",
    "chla",
    "g_max",
    "lambda_max",
    "r_n",
    "a_n",
    "i_z",
    "cl_z",
    "e_z",
    "r_d",
    "m_q",
];

pub fn state_values(s: &NpzdState) -> [f64; 14] {
    let b = s.b.to_array();
    let mut out = [0.0; 14];
    out[..5].copy_from_slice(&[s.x.n, s.x.p, s.x.z, s.x.d, s.chla]);
    out[5..].copy_from_slice(&b);
    out
}

pub fn state_from_values(v: &[f64; 14]) -> NpzdState {
    let mut b = [0.0; 9];
    b.copy_from_slice(&v[5..]);
    NpzdState {
        x: crate::model::StateVector::new(v[0], v[1], v[2], v[3]),
        b: BgcVector::from_array(b),
        chla: v[4],
    }
}

/// Empirical quantiles with linear interpolation between order statistics
/// (`h = (n - 1) p`).
pub fn quantiles(values: &[f64], probs: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Data("cannot summarise an empty sample".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("sample contains NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    probs
        .iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Data(format!("probability {p} outside [0, 1]")));
            }
            let h = (n - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = h - lo as f64;
            Ok(if frac == 0.0 { sorted[lo] } else { sorted[lo] + frac * (sorted[hi] - sorted[lo]) })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileRow {
    pub day: usize,
    pub variable: String,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuantileSummary {
    pub rows: Vec<QuantileRow>,
}

impl QuantileSummary {
    pub fn get(&self, day: usize, variable: &str) -> Option<&QuantileRow> {
        self.rows.iter().find(|r| r.day == day && r.variable == variable)
    }

    /// Rows for one variable, in day order.
    pub fn variable(&self, variable: &str) -> Vec<&QuantileRow> {
        self.rows.iter().filter(|r| r.variable == variable).collect()
    }

    pub fn days(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.rows.iter().map(|r| r.day).collect();
        d.dedup();
        d
    }

    pub fn check_ordering(&self) -> Result<()> {
        for r in &self.rows {
            if !(r.q025 <= r.q500 && r.q500 <= r.q975) {
                return Err(Error::Data(format!(
                    "quantiles out of order on day {} for {}: {} {} {}",
                    r.day, r.variable, r.q025, r.q500, r.q975
                )));
            }
        }
        Ok(())
    }
}

/// Summarise trajectories that all start on `first_day`.
pub fn summarize_trajectories(trajectories: &[Vec<NpzdState>], first_day: usize) -> Result<QuantileSummary> {
    let len = trajectories
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Data("cannot summarise an empty ensemble".into()))?;
    if trajectories.iter().any(|t| t.len() != len) {
        return Err(Error::Data("trajectories have different lengths".into()));
    }
    let mut rows = Vec::with_capacity(len * STATE_COLUMNS.len());
    let mut column = vec![0.0; trajectories.len()];
    for t in 0..len {
        let values: Vec<[f64; 14]> = trajectories.iter().map(|tr| state_values(&tr[t])).collect();
        for (k, name) in STATE_COLUMNS.iter().enumerate() {
            for (c, v) in column.iter_mut().zip(&values) {
                *c = v[k];
            }
            let q = quantiles(&column, &SUMMARY_PROBS)?;
            rows.push(QuantileRow {
                day: first_day + t,
                variable: name.to_string(),
                q025: q[0],
                q500: q[1],
                q975: q[2],
            });
        }
    }
    Ok(QuantileSummary { rows })
}

pub fn write_quantiles<W: Write>(writer: W, summary: &QuantileSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["day", "variable", "q025", "q500", "q975"])?;
    for r in &summary.rows {
        w.write_record([
            r.day.to_string(),
            r.variable.clone(),
            r.q025.to_string(),
            r.q500.to_string(),
            r.q975.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<quantiles>", e))?;
    Ok(())
}

pub fn parse_quantiles<R: Read>(reader: R, source_name: &str) -> Result<QuantileSummary> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(source_name, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers != ["day", "variable", "q025", "q500", "q975"] {
        return Err(Error::parse(source_name, 1, "expected header day,variable,q025,q500,q975"));
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(source_name, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let num = |i: usize| {
            record[i]
                .parse::<f64>()
                .map_err(|_| Error::parse(source_name, line, format!("invalid number {:?}", &record[i])))
        };
        rows.push(QuantileRow {
            day: record[0]
                .parse()
                .map_err(|_| Error::parse(source_name, line, format!("invalid day {:?}", &record[0])))?,
            variable: record[1].to_string(),
            q025: num(2)?,
            q500: num(3)?,
            q975: num(4)?,
        });
    }
    Ok(QuantileSummary { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StateVector;
    use proptest::prelude::*;

    fn state(v: f64) -> NpzdState {
        NpzdState {
            x: StateVector::new(v, v + 1.0, v + 2.0, v + 3.0),
            b: BgcVector::from_array([v; 9]),
            chla: v / 10.0,
        }
    }

    #[test]
    fn interpolated_median() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantiles(&v, &[0.5]).unwrap(), vec![50.5]);
        assert_eq!(quantiles(&v, &[0.0, 1.0]).unwrap(), vec![1.0, 100.0]);
        assert!((quantiles(&v, &[0.025]).unwrap()[0] - 3.475).abs() < 1e-12);
        assert_eq!(quantiles(&[7.0; 9], &SUMMARY_PROBS).unwrap(), vec![7.0; 3]);
        assert!(quantiles(&[], &[0.5]).is_err());
        assert!(quantiles(&[1.0], &[1.5]).is_err());
    }

    #[test]
    fn single_member_summary_is_the_trajectory() {
        let traj = vec![(0..5).map(|d| state(d as f64)).collect::<Vec<_>>()];
        let s = summarize_trajectories(&traj, 10).unwrap();
        assert_eq!(s.rows.len(), 5 * 14);
        let r = s.get(12, "z").unwrap();
        assert_eq!((r.q025, r.q500, r.q975), (4.0, 4.0, 4.0));
        assert_eq!(s.days(), vec![10, 11, 12, 13, 14]);
    }

    #[test]
    fn csv_round_trip() {
        let trajs: Vec<Vec<NpzdState>> = (0..7).map(|k| (0..3).map(|d| state((k * d) as f64 * 0.37)).collect()).collect();
        let s = summarize_trajectories(&trajs, 0).unwrap();
        let mut buf = Vec::new();
        write_quantiles(&mut buf, &s).unwrap();
        assert_eq!(parse_quantiles(buf.as_slice(), "q").unwrap(), s);
    }

    #[test]
    fn state_columns_round_trip() {
        let s = state(1.5);
        assert_eq!(state_from_values(&state_values(&s)), s);
    }

    proptest! {
        #[test]
        fn quantiles_are_ordered_and_permutation_invariant(
            values in prop::collection::vec(-1e6..1e6f64, 1..60).prop_shuffle(),
        ) {
            let q = quantiles(&values, &SUMMARY_PROBS).unwrap();
            prop_assert!(q[0] <= q[1] && q[1] <= q[2]);
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assert_eq!(q, quantiles(&sorted, &SUMMARY_PROBS).unwrap());
        }
    }
}
