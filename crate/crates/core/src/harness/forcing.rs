//! Daily forcing series: CSV ingestion, validation and a synthetic
//! subarctic-Pacific-like climatology.

use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ForcingRecord;

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Consecutive daily forcing records; `records[d]` is day `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSeries {
    /// Calendar date of day 0.
    pub start_date: NaiveDate,
    pub records: Vec<ForcingRecord>,
}

impl ForcingSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.start_date + chrono::Days::new(day as u64)
    }
}

/// `d(mld)/dt` by centred differences inside, one-sided at the ends (m d⁻¹).
pub fn derive_psi(mld: &[f64]) -> Vec<f64> {
    let n = mld.len();
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    mld[1] - mld[0]
                } else if i == n - 1 {
                    mld[n - 1] - mld[n - 2]
                } else {
                    (mld[i + 1] - mld[i - 1]) / 2.0
                }
            })
            .collect(),
    }
}

fn parse_field(source: &str, line: usize, column: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::parse(source, line, format!("invalid {column} value {raw:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(source, line, format!("{column} must be finite, got {raw}")));
    }
    Ok(v)
}

/// Parse a forcing CSV with header `date,mld_m,temp_c,par,bcn` and an optional
/// `psi` column. Dates must be consecutive days.
pub fn parse_forcing<R: Read>(reader: R, source_name: &str) -> Result<ForcingSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(source_name, 1, e.to_string()))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let expected = ["date", "mld_m", "temp_c", "par", "bcn"];
    let has_psi = match headers.len() {
        5 => false,
        6 if headers[5] == "psi" => true,
        _ => {
            return Err(Error::parse(
                source_name,
                1,
                format!("expected header date,mld_m,temp_c,par,bcn[,psi], found {}", headers.join(",")),
            ))
        }
    };
    if headers[..5] != expected {
        return Err(Error::parse(
            source_name,
            1,
            format!("expected header date,mld_m,temp_c,par,bcn[,psi], found {}", headers.join(",")),
        ));
    }

    let mut start_date = None;
    let mut prev: Option<NaiveDate> = None;
    let mut mld = Vec::new();
    let mut rows = Vec::new();
    let mut psi = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(source_name, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let date = NaiveDate::parse_from_str(&record[0], DATE_FORMAT)
            .map_err(|_| Error::parse(source_name, line, format!("invalid date {:?} (want YYYY-MM-DD)", &record[0])))?;
        if let Some(p) = prev {
            if date <= p {
                return Err(Error::parse(
                    source_name,
                    line,
                    format!("dates must increase: {date} follows {p}"),
                ));
            }
            let gap = (date - p).num_days();
            if gap > 1 {
                return Err(Error::parse(
                    source_name,
                    line,
                    format!("gap of {} missing day(s) between {p} and {date}", gap - 1),
                ));
            }
        } else {
            start_date = Some(date);
        }
        prev = Some(date);

        let m = parse_field(source_name, line, "mld_m", &record[1])?;
        if m <= 0.0 {
            return Err(Error::parse(source_name, line, format!("mld_m must be positive, got {m}")));
        }
        let temp = parse_field(source_name, line, "temp_c", &record[2])?;
        let par = parse_field(source_name, line, "par", &record[3])?;
        if par < 0.0 {
            return Err(Error::parse(source_name, line, format!("par must be non-negative, got {par}")));
        }
        let bcn = parse_field(source_name, line, "bcn", &record[4])?;
        if bcn < 0.0 {
            return Err(Error::parse(source_name, line, format!("bcn must be non-negative, got {bcn}")));
        }
        if has_psi {
            psi.push(parse_field(source_name, line, "psi", &record[5])?);
        }
        mld.push(m);
        rows.push((temp, par, bcn));
    }
    let start_date = start_date.ok_or_else(|| Error::parse(source_name, 2, "forcing file has no data rows"))?;
    if !has_psi {
        psi = derive_psi(&mld);
    }
    let records = rows
        .into_iter()
        .zip(mld.into_iter().zip(psi))
        .map(|((temp, par, bcn), (mld, psi))| ForcingRecord {
            mld,
            psi,
            temp,
            par,
            bcn,
        })
        .collect();
    Ok(ForcingSeries { start_date, records })
}

pub fn load_forcing(path: &Path) -> Result<ForcingSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_forcing(std::io::BufReader::new(file), &path.display().to_string())
}

/// Write with an explicit `psi` column so the series round-trips exactly.
pub fn write_forcing<W: Write>(writer: W, series: &ForcingSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "mld_m", "temp_c", "par", "bcn", "psi"])?;
    for (d, r) in series.records.iter().enumerate() {
        w.write_record([
            series.date(d).format(DATE_FORMAT).to_string(),
            r.mld.to_string(),
            r.temp.to_string(),
            r.par.to_string(),
            r.bcn.to_string(),
            r.psi.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<forcing>", e))?;
    Ok(())
}

/// Shape of the synthetic climatology. Each field is a cosine over the year
/// peaking on the given day of year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClimatologyParams {
    pub year_days: f64,
    pub mld_min: f64,
    pub mld_max: f64,
    /// Day of deepest mixing (late winter).
    pub mld_peak_day: f64,
    pub temp_min: f64,
    pub temp_max: f64,
    pub temp_peak_day: f64,
    pub par_min: f64,
    pub par_max: f64,
    pub par_peak_day: f64,
    pub bcn_mean: f64,
    pub bcn_amplitude: f64,
    pub bcn_peak_day: f64,
}

impl Default for ClimatologyParams {
    fn default() -> Self {
        Self {
            year_days: 365.0,
            mld_min: 30.0,
            mld_max: 100.0,
            mld_peak_day: 60.0,
            temp_min: 6.0,
            temp_max: 14.0,
            temp_peak_day: 242.0,
            par_min: 5.0,
            par_max: 40.0,
            par_peak_day: 172.0,
            bcn_mean: 16.0,
            bcn_amplitude: 1.0,
            bcn_peak_day: 60.0,
        }
    }
}

impl ClimatologyParams {
    fn phase(&self, day: f64, peak: f64) -> f64 {
        TAU * (day - peak) / self.year_days
    }

    /// Forcing on a (possibly fractional) day; periodic in `year_days`.
    pub fn record_at(&self, day: f64) -> ForcingRecord {
        let mid = |lo: f64, hi: f64| (0.5 * (lo + hi), 0.5 * (hi - lo));
        let (m0, m1) = mid(self.mld_min, self.mld_max);
        let (t0, t1) = mid(self.temp_min, self.temp_max);
        let (p0, p1) = mid(self.par_min, self.par_max);
        let mp = self.phase(day, self.mld_peak_day);
        ForcingRecord {
            mld: m0 + m1 * mp.cos(),
            psi: -m1 * TAU / self.year_days * mp.sin(),
            temp: t0 + t1 * self.phase(day, self.temp_peak_day).cos(),
            par: p0 + p1 * self.phase(day, self.par_peak_day).cos(),
            bcn: self.bcn_mean + self.bcn_amplitude * self.phase(day, self.bcn_peak_day).cos(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.year_days > 0.0
            && self.mld_min > 0.0
            && self.mld_max >= self.mld_min
            && self.temp_max >= self.temp_min
            && self.par_min >= 0.0
            && self.par_max >= self.par_min
            && self.bcn_mean - self.bcn_amplitude.abs() >= 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid climatology parameters: {self:?}")));
        }
        Ok(())
    }
}

/// `days` consecutive days of the climatology, starting 1 January.
pub fn synth_climatology(days: usize, params: &ClimatologyParams) -> ForcingSeries {
    ForcingSeries {
        start_date: NaiveDate::from_ymd_opt(2001, 1, 1).expect("valid date"),
        records: (0..days).map(|d| params.record_at(d as f64)).collect(),
    }
}
