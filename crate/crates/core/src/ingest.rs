//! Loading, return computation, calendar encoding and date alignment.
//!
//! A row of an [`AlignedDataset`] is one calendar day. The target of row `t`
//! is the `Returns` value `horizon` rows later; rows whose target would fall
//! past the end of the data are dropped.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;
use thiserror::Error;

pub const RETURNS: &str = "Returns";
pub const DAY_OF_WEEK_COS: &str = "DayOfWeek_cos";
pub const DOY_COS: &str = "DOY_cos";

/// Base series available to both arms.
pub const BASELINE_SERIES: [&str; 3] = [RETURNS, DAY_OF_WEEK_COS, DOY_COS];

/// Default indicator columns, named as in the Our World in Data COVID-19 export.
pub const DEFAULT_INDICATORS: [&str; 45] = [
    "total_cases",
    "new_cases",
    "new_cases_smoothed",
    "total_deaths",
    "new_deaths",
    "new_deaths_smoothed",
    "total_cases_per_million",
    "new_cases_per_million",
    "new_cases_smoothed_per_million",
    "total_deaths_per_million",
    "new_deaths_per_million",
    "new_deaths_smoothed_per_million",
    "reproduction_rate",
    "icu_patients",
    "icu_patients_per_million",
    "hosp_patients",
    "hosp_patients_per_million",
    "weekly_icu_admissions",
    "weekly_icu_admissions_per_million",
    "weekly_hosp_admissions",
    "weekly_hosp_admissions_per_million",
    "total_tests",
    "new_tests",
    "total_tests_per_thousand",
    "new_tests_per_thousand",
    "new_tests_smoothed",
    "new_tests_smoothed_per_thousand",
    "positive_rate",
    "tests_per_case",
    "total_vaccinations",
    "people_vaccinated",
    "people_fully_vaccinated",
    "total_boosters",
    "new_vaccinations",
    "new_vaccinations_smoothed",
    "total_vaccinations_per_hundred",
    "people_vaccinated_per_hundred",
    "people_fully_vaccinated_per_hundred",
    "total_boosters_per_hundred",
    "new_vaccinations_smoothed_per_million",
    "new_people_vaccinated_smoothed",
    "new_people_vaccinated_smoothed_per_hundred",
    "stringency_index",
    "excess_mortality",
    "excess_mortality_cumulative",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: cannot parse `{value}` as an ISO-8601 date")]
    UnparsableDate { row: usize, value: String },
    #[error("row {row}: cannot parse `{value}` in column `{column}` as a number")]
    UnparsableValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("non-positive price {price} on {date}")]
    NonPositivePrice { date: NaiveDate, price: f64 },
    #[error("series has {0} observations, need at least 2")]
    TooShort(usize),
    #[error("dates are not strictly increasing at index {0}")]
    UnsortedDates(usize),
    #[error("column `{column}` has {got} values for {expected} dates")]
    LengthMismatch {
        column: String,
        expected: usize,
        got: usize,
    },
    #[error("inputs share no usable dates")]
    EmptyIntersection,
    #[error("indicator column `{0}` has no observed values")]
    AllGapColumn(String),
    #[error("horizon must be at least 1")]
    InvalidHorizon,
    #[error("split {train_end}+{test_len} exceeds dataset length {len}")]
    OutOfRange {
        train_end: usize,
        test_len: usize,
        len: usize,
    },
    #[error("no target column (expected a `target__h<N>` header)")]
    MissingTarget,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, IngestError>;

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    close: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, close: Vec<f64>) -> Result<Self> {
        if dates.len() != close.len() {
            return Err(IngestError::LengthMismatch {
                column: "close".into(),
                expected: dates.len(),
                got: close.len(),
            });
        }
        if dates.len() < 2 {
            return Err(IngestError::TooShort(dates.len()));
        }
        check_increasing(&dates)?;
        for (&date, &price) in dates.iter().zip(&close) {
            if !(price > 0.0 && price.is_finite()) {
                return Err(IngestError::NonPositivePrice { date, price });
            }
        }
        Ok(Self { dates, close })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn close(&self) -> &[f64] {
        &self.close
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// A dated, named sequence of values.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

/// Indicator columns on a shared date index. `None` marks a gap.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorTable {
    dates: Vec<NaiveDate>,
    columns: Vec<(String, Vec<Option<f64>>)>,
}

impl IndicatorTable {
    pub fn new(dates: Vec<NaiveDate>, columns: Vec<(String, Vec<Option<f64>>)>) -> Result<Self> {
        check_increasing(&dates)?;
        for (name, values) in &columns {
            if values.len() != dates.len() {
                return Err(IngestError::LengthMismatch {
                    column: name.clone(),
                    expected: dates.len(),
                    got: values.len(),
                });
            }
        }
        Ok(Self { dates, columns })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn columns(&self) -> &[(String, Vec<Option<f64>>)] {
        &self.columns
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PoolTag {
    Baseline,
    Augmented,
}

/// How indicator gaps are filled before alignment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapPolicy {
    /// Carry the last observation forward; gaps before the first observation become 0.
    #[default]
    ForwardFillThenZero,
    /// Every gap becomes 0.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset {
    dates: Vec<NaiveDate>,
    series: Vec<(String, Vec<f64>)>,
    target: Vec<f64>,
    horizon: usize,
    pool_tag: PoolTag,
}

impl AlignedDataset {
    /// Assembles a dataset from already-aligned columns. `target[t]` must
    /// be the forward value the caller wants to predict at row `t`.
    pub fn from_parts(
        dates: Vec<NaiveDate>,
        series: Vec<(String, Vec<f64>)>,
        target: Vec<f64>,
        horizon: usize,
        pool_tag: PoolTag,
    ) -> Result<Self> {
        check_increasing(&dates)?;
        let n = dates.len();
        for (name, v) in series
            .iter()
            .map(|(n, v)| (n.as_str(), v))
            .chain(std::iter::once(("target", &target)))
        {
            if v.len() != n {
                return Err(IngestError::LengthMismatch {
                    column: name.to_string(),
                    expected: n,
                    got: v.len(),
                });
            }
        }
        Ok(Self {
            dates,
            series,
            target,
            horizon,
            pool_tag,
        })
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

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn pool_tag(&self) -> PoolTag {
        self.pool_tag
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.series
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn series_names(&self) -> impl Iterator<Item = &str> {
        self.series.iter().map(|(n, _)| n.as_str())
    }

    pub fn all_series(&self) -> &[(String, Vec<f64>)] {
        &self.series
    }

    /// Names of the non-baseline columns.
    pub fn indicator_names(&self) -> Vec<String> {
        self.series
            .iter()
            .map(|(n, _)| n.clone())
            .filter(|n| !BASELINE_SERIES.contains(&n.as_str()))
            .collect()
    }

    pub fn target_column_name(&self) -> String {
        format!("target__h{}", self.horizon)
    }

    /// Writes `date, <series...>, target__h<horizon>`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut header = vec!["date".to_string()];
        header.extend(self.series.iter().map(|(n, _)| n.clone()));
        header.push(self.target_column_name());
        w.write_record(&header).map_err(|e| csv_err(path, e))?;
        for t in 0..self.len() {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(self.dates[t].to_string());
            for (_, v) in &self.series {
                rec.push(v[t].to_string());
            }
            rec.push(self.target[t].to_string());
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a file written by [`AlignedDataset::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
        let date_idx = column_index(&headers, "date")?;
        let (target_idx, horizon) = headers
            .iter()
            .enumerate()
            .find_map(|(i, h)| {
                h.strip_prefix("target__h")
                    .and_then(|s| s.parse::<usize>().ok())
                    .map(|hz| (i, hz))
            })
            .ok_or(IngestError::MissingTarget)?;
        let series_idx: Vec<usize> = (0..headers.len())
            .filter(|&i| i != date_idx && i != target_idx)
            .collect();
        let mut dates = Vec::new();
        let mut cols = vec![Vec::new(); series_idx.len()];
        let mut target = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            dates.push(parse_date(row, &rec[date_idx])?);
            for (k, &i) in series_idx.iter().enumerate() {
                cols[k].push(parse_number(row, &headers[i], &rec[i])?);
            }
            target.push(parse_number(row, &headers[target_idx], &rec[target_idx])?);
        }
        let series: Vec<(String, Vec<f64>)> = series_idx
            .iter()
            .map(|&i| headers[i].to_string())
            .zip(cols)
            .collect();
        let pool_tag = if series.iter().all(|(n, _)| BASELINE_SERIES.contains(&n.as_str())) {
            PoolTag::Baseline
        } else {
            PoolTag::Augmented
        };
        Self::from_parts(dates, series, target, horizon, pool_tag)
    }
}

/// Chronological train/test row ranges over an [`AlignedDataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train_end: usize,
    pub test_len: usize,
}

impl SplitIndices {
    pub fn train(&self) -> std::ops::Range<usize> {
        0..self.train_end
    }

    pub fn test(&self) -> std::ops::Range<usize> {
        self.train_end..self.train_end + self.test_len
    }
}

pub fn chronological_split(len: usize, train_end: usize, test_len: usize) -> Result<SplitIndices> {
    if train_end == 0 || test_len == 0 || train_end + test_len > len {
        return Err(IngestError::OutOfRange {
            train_end,
            test_len,
            len,
        });
    }
    Ok(SplitIndices { train_end, test_len })
}

pub fn load_prices(path: &Path, date_col: &str, close_col: &str) -> Result<PriceSeries> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let di = column_index(&headers, date_col)?;
    let ci = column_index(&headers, close_col)?;
    let mut rows = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let date = parse_date(row, &rec[di])?;
        let close = parse_number(row, close_col, &rec[ci])?;
        rows.push((date, close));
    }
    rows.sort_by_key(|&(d, _)| d);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(IngestError::DuplicateDate(w[0].0));
    }
    let (dates, close) = rows.into_iter().unzip();
    PriceSeries::new(dates, close)
}

/// Loads indicator columns. When `location` is given as `(column, value)`,
/// only matching rows are kept. An empty `columns` list selects every
/// column except the date and location columns. Empty or non-finite cells
/// are gaps.
pub fn load_indicators(
    path: &Path,
    date_col: &str,
    location: Option<(&str, &str)>,
    columns: &[String],
) -> Result<IndicatorTable> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let di = column_index(&headers, date_col)?;
    let loc = match location {
        Some((col, value)) => Some((column_index(&headers, col)?, value)),
        None => None,
    };
    let selected: Vec<(String, usize)> = if columns.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != di && loc.is_none_or(|(li, _)| li != i))
            .map(|(i, h)| (h.to_string(), i))
            .collect()
    } else {
        columns
            .iter()
            .map(|c| column_index(&headers, c).map(|i| (c.clone(), i)))
            .collect::<Result<_>>()?
    };
    let mut rows: Vec<(NaiveDate, Vec<Option<f64>>)> = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if let Some((li, value)) = loc {
            if &rec[li] != value {
                continue;
            }
        }
        let date = parse_date(row, &rec[di])?;
        let vals = selected
            .iter()
            .map(|(name, i)| parse_optional(row, name, &rec[*i]))
            .collect::<Result<Vec<_>>>()?;
        rows.push((date, vals));
    }
    rows.sort_by_key(|(d, _)| *d);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(IngestError::DuplicateDate(w[0].0));
    }
    let dates: Vec<NaiveDate> = rows.iter().map(|(d, _)| *d).collect();
    let columns = selected
        .iter()
        .enumerate()
        .map(|(k, (name, _))| (name.clone(), rows.iter().map(|(_, v)| v[k]).collect()))
        .collect();
    IndicatorTable::new(dates, columns)
}

/// `ln(close[t] / close[t-1])`, dated at `t`.
pub fn log_returns(p: &PriceSeries) -> Result<Series> {
    if p.len() < 2 {
        return Err(IngestError::TooShort(p.len()));
    }
    let values = p.close.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    Ok(Series {
        name: RETURNS.into(),
        dates: p.dates[1..].to_vec(),
        values,
    })
}

/// Monday-origin day-of-week cosine and day-of-year cosine.
pub fn calendar_features(dates: &[NaiveDate]) -> (Series, Series) {
    let dow = dates
        .iter()
        .map(|d| (2.0 * PI * d.weekday().num_days_from_monday() as f64 / 7.0).cos())
        .collect();
    let doy = dates
        .iter()
        .map(|d| (2.0 * PI * (d.ordinal() as f64 - 1.0) / 365.25).cos())
        .collect();
    (
        Series {
            name: DAY_OF_WEEK_COS.into(),
            dates: dates.to_vec(),
            values: dow,
        },
        Series {
            name: DOY_COS.into(),
            dates: dates.to_vec(),
            values: doy,
        },
    )
}

/// Fills gaps in every column according to `policy`.
pub fn fill_gaps(table: &IndicatorTable, policy: GapPolicy) -> Result<Vec<(String, Vec<f64>)>> {
    table
        .columns
        .iter()
        .map(|(name, values)| {
            if values.iter().all(Option::is_none) {
                return Err(IngestError::AllGapColumn(name.clone()));
            }
            let filled = match policy {
                GapPolicy::ForwardFillThenZero => {
                    let mut last = None;
                    values
                        .iter()
                        .map(|v| {
                            if v.is_some() {
                                last = *v;
                            }
                            last.unwrap_or(0.0)
                        })
                        .collect()
                }
                GapPolicy::Zero => values.iter().map(|v| v.unwrap_or(0.0)).collect(),
            };
            Ok((name.clone(), filled))
        })
        .collect()
}

/// Inner-joins returns, calendar encodings and (optionally) indicators on
/// date, fills indicator gaps, and attaches `Returns` shifted `horizon`
/// rows forward as the target.
pub fn align(
    returns: &Series,
    calendar: (&Series, &Series),
    indicators: Option<&IndicatorTable>,
    horizon: usize,
    gap_policy: GapPolicy,
) -> Result<AlignedDataset> {
    if horizon == 0 {
        return Err(IngestError::InvalidHorizon);
    }
    for s in [returns, calendar.0, calendar.1] {
        check_increasing(&s.dates)?;
        if s.dates.len() != s.values.len() {
            return Err(IngestError::LengthMismatch {
                column: s.name.clone(),
                expected: s.dates.len(),
                got: s.values.len(),
            });
        }
    }
    let filled = indicators.map(|t| fill_gaps(t, gap_policy)).transpose()?;

    let lookup = |s: &Series| -> HashMap<NaiveDate, usize> {
        s.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect()
    };
    let dow_idx = lookup(calendar.0);
    let doy_idx = lookup(calendar.1);
    let ind_idx: Option<HashMap<NaiveDate, usize>> =
        indicators.map(|t| t.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect());

    let mut rows: Vec<(NaiveDate, usize, usize, usize, Option<usize>)> = Vec::new();
    for (ri, d) in returns.dates.iter().enumerate() {
        let (Some(&a), Some(&b)) = (dow_idx.get(d), doy_idx.get(d)) else {
            continue;
        };
        let c = match &ind_idx {
            Some(m) => match m.get(d) {
                Some(&c) => Some(c),
                None => continue,
            },
            None => None,
        };
        rows.push((*d, ri, a, b, c));
    }
    if rows.len() <= horizon {
        return Err(IngestError::EmptyIntersection);
    }

    let n = rows.len() - horizon;
    let ret: Vec<f64> = rows.iter().map(|r| returns.values[r.1]).collect();
    let target = ret[horizon..].to_vec();
    let mut series = vec![
        (RETURNS.to_string(), ret[..n].to_vec()),
        (
            calendar.0.name.clone(),
            rows[..n].iter().map(|r| calendar.0.values[r.2]).collect(),
        ),
        (
            calendar.1.name.clone(),
            rows[..n].iter().map(|r| calendar.1.values[r.3]).collect(),
        ),
    ];
    if let Some(filled) = &filled {
        for (name, values) in filled {
            series.push((
                name.clone(),
                rows[..n]
                    .iter()
                    .map(|r| values[r.4.expect("indicator row")])
                    .collect(),
            ));
        }
    }
    let pool_tag = if indicators.is_some() {
        PoolTag::Augmented
    } else {
        PoolTag::Baseline
    };
    AlignedDataset::from_parts(
        rows[..n].iter().map(|r| r.0).collect(),
        series,
        target,
        horizon,
        pool_tag,
    )
}

/// Returns the first `(row, column)` holding a non-finite value, if any.
pub fn first_non_finite(d: &AlignedDataset) -> Option<(usize, String)> {
    for (name, v) in &d.series {
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Some((i, name.clone()));
        }
    }
    d.target
        .iter()
        .position(|x| !x.is_finite())
        .map(|i| (i, "target".to_string()))
}

/// Dates that do not follow their predecessor by exactly one day.
pub fn calendar_gaps(dates: &[NaiveDate]) -> Vec<NaiveDate> {
    dates
        .windows(2)
        .filter(|w| (w[1] - w[0]).num_days() != 1)
        .map(|w| w[1])
        .collect()
}

fn check_increasing(dates: &[NaiveDate]) -> Result<()> {
    for (i, w) in dates.windows(2).enumerate() {
        if w[1] == w[0] {
            return Err(IngestError::DuplicateDate(w[0]));
        }
        if w[1] < w[0] {
            return Err(IngestError::UnsortedDates(i + 1));
        }
    }
    Ok(())
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
}

fn parse_date(row: usize, s: &str) -> Result<NaiveDate> {
    let s = s.trim();
    // Tolerate a trailing time component ("2021-01-01 00:00:00").
    let day = s.get(..10).unwrap_or(s);
    NaiveDate::parse_from_str(day, "%Y-%m-%d").map_err(|_| IngestError::UnparsableDate {
        row,
        value: s.to_string(),
    })
}

fn parse_number(row: usize, column: &str, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| IngestError::UnparsableValue {
        row,
        column: column.to_string(),
        value: s.to_string(),
    })
}

fn parse_optional(row: usize, column: &str, s: &str) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        return Ok(None);
    }
    let v = parse_number(row, column, s)?;
    Ok(v.is_finite().then_some(v))
}

fn csv_err(path: &Path, source: csv::Error) -> IngestError {
    IngestError::Csv {
        path: path.display().to_string(),
        source,
    }
}
