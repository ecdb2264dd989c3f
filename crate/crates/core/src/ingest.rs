//! Turning panel data into matrix streams.
//!
//! Two recipes:
//!
//! * daily panel readings: fit a per-location seasonal profile (calendar-day
//!   average across years, smoothed by a centered circular moving average),
//!   subtract it, and take the outer product `V_t V_tᵀ` of each day's
//!   residual vector;
//! * already-symmetric observations: subtract the entrywise mean of an
//!   initial baseline window.
//!
//! February 29 is dropped before calendar alignment, so every year has 365
//! calendar days.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

use crate::io::{check_header, csv_reader, format_f64, FormatError};
use crate::matrix::{MatrixError, SymMatrix};

pub const PANEL_HEADER: [&str; 3] = ["date", "location", "value"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing value at {date} for location `{location}`")]
    MissingValue { date: NaiveDate, location: String },

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("location mismatch: {0}")]
    LocationMismatch(String),

    #[error("date {0} has no calendar day in the seasonal profile")]
    UnmappedDate(NaiveDate),

    #[error("baseline length {baseline} must be shorter than the stream length {len}")]
    BaselineTooLong { baseline: usize, len: usize },

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Readings per day and location; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSeries {
    locations: Vec<String>,
    days: Vec<(NaiveDate, Vec<Option<f64>>)>,
}

impl PanelSeries {
    pub fn new(
        locations: Vec<String>,
        days: Vec<(NaiveDate, Vec<Option<f64>>)>,
    ) -> Result<Self, IngestError> {
        for w in days.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(IngestError::InvalidParameter(format!(
                    "dates must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some((d, v)) = days.iter().find(|(_, v)| v.len() != locations.len()) {
            return Err(IngestError::InvalidParameter(format!(
                "{d} has {} readings for {} locations",
                v.len(),
                locations.len()
            )));
        }
        Ok(Self { locations, days })
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn days(&self) -> &[(NaiveDate, Vec<Option<f64>>)] {
        &self.days
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    fn first_missing(&self) -> Option<IngestError> {
        for (date, vals) in &self.days {
            if let Some(k) = vals.iter().position(Option::is_none) {
                return Some(IngestError::MissingValue {
                    date: *date,
                    location: self.locations[k].clone(),
                });
            }
        }
        None
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let f = File::open(path).map_err(FormatError::from)?;
        Self::read_from(BufReader::new(f))
    }

    /// Parses the long `date,location,value` layout. Locations keep their order
    /// of first appearance; an empty value, or a `(date, location)` pair that
    /// never appears, is a missing reading.
    pub fn read_from<R: Read>(r: R) -> Result<Self, IngestError> {
        let mut rdr = csv_reader(r);
        check_header(&mut rdr, &PANEL_HEADER)?;
        let mut locations: Vec<String> = Vec::new();
        let mut loc_index: HashMap<String, usize> = HashMap::new();
        let mut cells: Vec<(NaiveDate, usize, Option<f64>, u64)> = Vec::new();
        let mut rec = csv::StringRecord::new();
        while rdr.read_record(&mut rec).map_err(FormatError::from)? {
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() == 1 && rec.get(0) == Some("") {
                continue;
            }
            if rec.len() != 3 {
                return Err(FormatError::parse(
                    line,
                    format!("expected 3 fields, found {}", rec.len()),
                )
                .into());
            }
            let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
                .map_err(|_| FormatError::parse(line, format!("invalid ISO date `{}`", &rec[0])))?;
            let loc = rec[1].to_string();
            if loc.is_empty() {
                return Err(FormatError::parse(line, "empty location id").into());
            }
            let value = if rec[2].is_empty() {
                None
            } else {
                Some(crate::io::parse_finite(&rec[2], "value", line)?)
            };
            let k = *loc_index.entry(loc.clone()).or_insert_with(|| {
                locations.push(loc);
                locations.len() - 1
            });
            cells.push((date, k, value, line));
        }
        let mut by_date: std::collections::BTreeMap<NaiveDate, Vec<Option<Option<f64>>>> =
            Default::default();
        for &(date, k, value, line) in &cells {
            let row = by_date
                .entry(date)
                .or_insert_with(|| vec![None; locations.len()]);
            if row.len() < locations.len() {
                row.resize(locations.len(), None);
            }
            if row[k].is_some() {
                return Err(FormatError::parse(
                    line,
                    format!("duplicate reading for {date} at `{}`", locations[k]),
                )
                .into());
            }
            row[k] = Some(value);
        }
        let days = by_date
            .into_iter()
            .map(|(d, mut row)| {
                row.resize(locations.len(), None);
                (d, row.into_iter().map(Option::flatten).collect())
            })
            .collect();
        Self::new(locations, days)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), IngestError> {
        let f = File::create(path).map_err(FormatError::from)?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush().map_err(FormatError::from)?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), IngestError> {
        let io = |e: std::io::Error| IngestError::Format(FormatError::Io(e));
        writeln!(w, "{}", PANEL_HEADER.join(",")).map_err(io)?;
        for (date, vals) in &self.days {
            for (loc, v) in self.locations.iter().zip(vals) {
                let v = v.map(format_f64).unwrap_or_default();
                writeln!(w, "{},{},{}", date.format("%Y-%m-%d"), loc, v).map_err(io)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    /// Any missing reading is an error.
    #[default]
    Error,
    /// Linear interpolation in time per location between the nearest observed
    /// days. Gaps at either end of the series remain an error.
    Interpolate,
}

/// Applies the missing-value policy, returning a series without gaps.
pub fn resolve_missing(
    series: &PanelSeries,
    policy: MissingPolicy,
) -> Result<PanelSeries, IngestError> {
    match policy {
        MissingPolicy::Error => match series.first_missing() {
            Some(e) => Err(e),
            None => Ok(series.clone()),
        },
        MissingPolicy::Interpolate => {
            let mut out = series.clone();
            let times: Vec<f64> = series
                .days
                .iter()
                .map(|(d, _)| d.num_days_from_ce() as f64)
                .collect();
            for k in 0..series.locations.len() {
                let observed: Vec<usize> = (0..series.len())
                    .filter(|&i| series.days[i].1[k].is_some())
                    .collect();
                for i in 0..series.len() {
                    if series.days[i].1[k].is_some() {
                        continue;
                    }
                    let after = observed.partition_point(|&o| o < i);
                    if after == 0 || after == observed.len() {
                        return Err(IngestError::MissingValue {
                            date: series.days[i].0,
                            location: series.locations[k].clone(),
                        });
                    }
                    let (a, b) = (observed[after - 1], observed[after]);
                    let (ya, yb) = (series.days[a].1[k].unwrap(), series.days[b].1[k].unwrap());
                    let w = (times[i] - times[a]) / (times[b] - times[a]);
                    out.days[i].1[k] = Some(ya + w * (yb - ya));
                }
            }
            Ok(out)
        }
    }
}

/// Zero-based calendar index of `date` in a `period`-day cycle that skips
/// February 29. With `period = 365` this is the day of year of a non-leap
/// year.
pub fn calendar_index(date: NaiveDate, period: usize) -> Option<usize> {
    if date.month() == 2 && date.day() == 29 {
        return None;
    }
    let year = date.year() as i64;
    let leap = NaiveDate::from_ymd_opt(date.year(), 2, 29).is_some();
    let mut doy = date.ordinal0() as i64;
    if leap && date.month() > 2 {
        doy -= 1;
    }
    // Non-leap days elapsed since 2000-01-01.
    let days = (year - 2000) * 365 + doy;
    Some(days.rem_euclid(period as i64) as usize)
}

/// Per-location seasonal profile.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalModel {
    pub period: usize,
    pub window: usize,
    pub locations: Vec<String>,
    /// `profile[k][d]`: smoothed level at location `k`, calendar day `d`.
    pub profile: Vec<Vec<f64>>,
}

impl SeasonalModel {
    pub fn value(&self, location: usize, date: NaiveDate) -> Option<f64> {
        calendar_index(date, self.period).map(|d| self.profile[location][d])
    }
}

/// Centered circular moving average of length `window`. Even windows reach
/// one day further back than forward.
pub fn circular_moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let p = xs.len();
    let back = window / 2;
    (0..p)
        .map(|d| {
            let s: f64 = (0..window)
                .map(|o| xs[(d + p * window - back + o) % p])
                .sum();
            s / window as f64
        })
        .collect()
}

/// Fits the seasonal profile: per-calendar-day mean across years, then the
/// circular moving average.
pub fn fit_seasonal(
    history: &PanelSeries,
    period: usize,
    window: usize,
) -> Result<SeasonalModel, IngestError> {
    if period == 0 {
        return Err(IngestError::InvalidParameter(
            "period must be positive".into(),
        ));
    }
    if window == 0 || window > period {
        return Err(IngestError::InvalidParameter(format!(
            "window must lie in 1..={period}, got {window}"
        )));
    }
    if let Some(e) = history.first_missing() {
        return Err(e);
    }
    let nloc = history.locations.len();
    let mut sums = vec![vec![0.0; period]; nloc];
    let mut counts = vec![0usize; period];
    for (date, vals) in &history.days {
        let Some(d) = calendar_index(*date, period) else {
            continue;
        };
        counts[d] += 1;
        for (k, v) in vals.iter().enumerate() {
            sums[k][d] += v.expect("checked above");
        }
    }
    if let Some(d) = counts.iter().position(|&c| c == 0) {
        return Err(IngestError::InsufficientHistory(format!(
            "calendar day {} of {period} has no observation",
            d + 1
        )));
    }
    let profile = sums
        .into_iter()
        .map(|s| {
            let raw: Vec<f64> = s.iter().zip(&counts).map(|(x, &c)| x / c as f64).collect();
            circular_moving_average(&raw, window)
        })
        .collect();
    Ok(SeasonalModel {
        period,
        window,
        locations: history.locations.clone(),
        profile,
    })
}

/// Subtracts the seasonal profile day by day. February 29 rows are dropped;
/// missing readings stay missing.
pub fn deseasonalize(
    series: &PanelSeries,
    model: &SeasonalModel,
) -> Result<PanelSeries, IngestError> {
    if series.locations != model.locations {
        return Err(IngestError::LocationMismatch(format!(
            "series has {:?}, model has {:?}",
            series.locations, model.locations
        )));
    }
    let mut days = Vec::with_capacity(series.len());
    for (date, vals) in &series.days {
        if date.month() == 2 && date.day() == 29 {
            continue;
        }
        let d = calendar_index(*date, model.period).ok_or(IngestError::UnmappedDate(*date))?;
        let v = vals
            .iter()
            .enumerate()
            .map(|(k, x)| x.map(|x| x - model.profile[k][d]))
            .collect();
        days.push((*date, v));
    }
    PanelSeries::new(series.locations.clone(), days)
}

/// `M_t = V_t V_tᵀ` for every day.
pub fn outer_product_stream(series: &PanelSeries) -> Result<Vec<SymMatrix>, IngestError> {
    if series.locations.is_empty() {
        return Err(IngestError::InvalidParameter(
            "series has no locations".into(),
        ));
    }
    if let Some(e) = series.first_missing() {
        return Err(e);
    }
    series
        .days
        .iter()
        .map(|(_, vals)| {
            let v: Vec<f64> = vals.iter().map(|x| x.expect("checked above")).collect();
            Ok(SymMatrix::outer(&v, 1.0)?)
        })
        .collect()
}

/// Subtracts the entrywise mean of the first `baseline_len` matrices from the
/// rest and returns the remainder.
pub fn center_by_baseline(
    stream: &[SymMatrix],
    baseline_len: usize,
) -> Result<Vec<SymMatrix>, IngestError> {
    if baseline_len == 0 {
        return Err(IngestError::InvalidParameter(
            "baseline length must be positive".into(),
        ));
    }
    if baseline_len >= stream.len() {
        return Err(IngestError::BaselineTooLong {
            baseline: baseline_len,
            len: stream.len(),
        });
    }
    let n = stream[0].dim();
    if let Some(m) = stream.iter().find(|m| m.dim() != n) {
        return Err(MatrixError::DimensionMismatch(n, m.dim()).into());
    }
    let mut mean = vec![0.0; stream[0].packed().len()];
    for m in &stream[..baseline_len] {
        for (acc, x) in mean.iter_mut().zip(m.packed()) {
            *acc += x;
        }
    }
    mean.iter_mut().for_each(|x| *x /= baseline_len as f64);
    stream[baseline_len..]
        .iter()
        .map(|m| {
            let data = m.packed().iter().zip(&mean).map(|(x, mu)| x - mu).collect();
            Ok(SymMatrix::from_packed(n, data)?)
        })
        .collect()
}
