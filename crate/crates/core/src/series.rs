//! Loading, splitting and scaling of daily univariate series.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Daily observations with strictly increasing dates.
///
/// Calendar gaps are allowed; the model is only ever evaluated at the
/// observed dates.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::InvalidSeries(format!(
                "{} dates but {} values",
                dates.len(),
                values.len()
            )));
        }
        if dates.len() < 2 {
            return Err(Error::InvalidSeries(format!(
                "need at least 2 observations, got {}",
                dates.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "non-finite value {} at {}",
                values[i], dates[i]
            )));
        }
        if let Some(w) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSeries(format!(
                "dates not strictly increasing: {} follows {}",
                dates[w + 1],
                dates[w]
            )));
        }
        Ok(TimeSeries { dates, values })
    }

    /// Builds a series of consecutive days starting at `start`.
    pub fn daily(start: NaiveDate, values: Vec<f64>) -> Result<Self> {
        let dates = (0..values.len())
            .map(|i| start + Duration::days(i as i64))
            .collect();
        Self::new(dates, values)
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn first_date(&self) -> NaiveDate {
        self.dates[0]
    }

    pub fn last_date(&self) -> NaiveDate {
        self.dates[self.dates.len() - 1]
    }

    /// Rows whose date lies in `[from, to]`. May be empty, so it does not
    /// go through the validating constructor.
    fn window(&self, from: NaiveDate, to: NaiveDate) -> (Vec<NaiveDate>, Vec<f64>) {
        self.dates
            .iter()
            .zip(&self.values)
            .filter(|(d, _)| **d >= from && **d <= to)
            .map(|(d, v)| (*d, *v))
            .unzip()
    }
}

/// Reads a `ds,y` CSV file.
pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, &path.display().to_string())
}

/// Reads `ds,y` CSV from any reader. `source_name` is used in error messages.
pub fn read_csv<R: Read>(reader: R, source_name: &str) -> Result<TimeSeries> {
    let parse_err = |line: u64, msg: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "ds" || &headers[1] != "y" {
        return Err(parse_err(
            1,
            format!("expected header `ds,y`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, got {}", record.len())));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("bad date `{}`: {e}", &record[0])))?;
        let value: f64 = record[1]
            .parse()
            .map_err(|e| parse_err(line, format!("bad value `{}`: {e}", &record[1])))?;
        if !value.is_finite() {
            return Err(parse_err(line, format!("non-finite value `{}`", &record[1])));
        }
        if let Some(prev) = dates.last() {
            if date <= *prev {
                let kind = if date == *prev { "duplicate" } else { "out-of-order" };
                return Err(parse_err(line, format!("{kind} date {date} (previous {prev})")));
            }
        }
        dates.push(date);
        values.push(value);
    }
    TimeSeries::new(dates, values).map_err(|e| parse_err(0, e.to_string()))
}

/// Splits `ts` into a training window of `train_days` calendar days ending
/// at `train_end` (inclusive) and a test window of the following
/// `horizon_days` days.
///
/// When `train_end` is `None` the window is placed so the test period ends
/// at the last observation.
pub fn split_train_test(
    ts: &TimeSeries,
    train_days: u32,
    horizon_days: u32,
    train_end: Option<NaiveDate>,
) -> Result<(TimeSeries, TimeSeries)> {
    if train_days == 0 {
        return Err(Error::Window("train_days must be positive".into()));
    }
    if horizon_days == 0 {
        return Err(Error::Window("horizon_days must be positive".into()));
    }
    let end = train_end.unwrap_or(ts.last_date() - Duration::days(horizon_days as i64));
    let start = end - Duration::days(train_days as i64 - 1);
    let test_end = end + Duration::days(horizon_days as i64);
    if start < ts.first_date() || test_end > ts.last_date() {
        return Err(Error::Window(format!(
            "window {start}..{test_end} exceeds data extent {}..{}",
            ts.first_date(),
            ts.last_date()
        )));
    }
    let (train_dates, train_values) = ts.window(start, end);
    let (test_dates, test_values) = ts.window(end + Duration::days(1), test_end);
    if train_dates.len() < 2 || test_dates.is_empty() {
        return Err(Error::Window(format!(
            "window {start}..{test_end} holds {} training and {} test observations",
            train_dates.len(),
            test_dates.len()
        )));
    }
    Ok((
        TimeSeries::new(train_dates, train_values)?,
        TimeSeries {
            dates: test_dates,
            values: test_values,
        },
    ))
}

/// The two time coordinates the model is evaluated on.
///
/// `t_scaled` is 0 at the first training date and 1 at the last and feeds
/// the trend. `t_days` counts days since the first training date and feeds
/// the seasonalities, so their periods stay in day units.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimePoints {
    pub t_scaled: Vec<f64>,
    pub t_days: Vec<f64>,
}

impl TimePoints {
    pub fn len(&self) -> usize {
        self.t_scaled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_scaled.is_empty()
    }

    /// Builds time points directly from scaled trend-time, with a nominal
    /// span used to derive day-time.
    pub fn from_scaled(t_scaled: Vec<f64>, span_days: f64) -> Self {
        let t_days = t_scaled.iter().map(|t| t * span_days).collect();
        TimePoints { t_scaled, t_days }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub t_origin: NaiveDate,
    pub t_span_days: f64,
    pub y_absmax: f64,
}

/// A series mapped onto model coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledSeries {
    pub times: TimePoints,
    pub y: Vec<f64>,
}

pub fn fit_scaling(train: &TimeSeries) -> Result<ScalingParams> {
    let span = (train.last_date() - train.first_date()).num_days();
    if span <= 0 {
        return Err(Error::Scaling("training span is zero days".into()));
    }
    let y_absmax = train.values().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if y_absmax == 0.0 {
        return Err(Error::Scaling("training values are all zero".into()));
    }
    Ok(ScalingParams {
        t_origin: train.first_date(),
        t_span_days: span as f64,
        y_absmax,
    })
}

impl ScalingParams {
    pub fn days_since_origin(&self, date: NaiveDate) -> f64 {
        (date - self.t_origin).num_days() as f64
    }

    pub fn times(&self, dates: &[NaiveDate]) -> TimePoints {
        let t_days: Vec<f64> = dates.iter().map(|d| self.days_since_origin(*d)).collect();
        let t_scaled = t_days.iter().map(|d| d / self.t_span_days).collect();
        TimePoints { t_scaled, t_days }
    }

    pub fn scale_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v / self.y_absmax).collect()
    }

    pub fn unscale_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * self.y_absmax).collect()
    }

    pub fn apply(&self, ts: &TimeSeries) -> ScaledSeries {
        ScaledSeries {
            times: self.times(ts.dates()),
            y: self.scale_y(ts.values()),
        }
    }
}
