//! Window features.
//!
//! A [`FeatureSpec`] picks a base series, a window that ends `w0` rows before
//! the current row and spans `wl` rows, and a [`FeatureFn`] that summarizes
//! the window. With `w0 <= 8` and `wl <= 7` the deepest lag is 14.

use crate::ingest::AlignedDataset;
use crate::matrix::DenseMatrix;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const MAX_OFFSET: usize = 8;
pub const MAX_WINDOW: usize = 7;
pub const DEFAULT_LOOKBACK: usize = 14;
pub const MAX_ENABLED_FEATURES: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("window ending {w0} rows before row {t} with length {wl} starts before the data")]
    InsufficientHistory { t: usize, w0: usize, wl: usize },
    #[error("invalid function code {0}")]
    InvalidFunctionCode(i32),
    #[error("{0} enabled features, at most {MAX_ENABLED_FEATURES} allowed")]
    TooManyFeatures(usize),
    #[error("unknown series `{0}`")]
    UnknownSeries(String),
    #[error("window geometry w0={w0}, wl={wl} outside 0..={MAX_OFFSET} / 1..={MAX_WINDOW} or deeper than lookback {lookback}")]
    InvalidGeometry { w0: usize, wl: usize, lookback: usize },
    #[error("empty window")]
    EmptyWindow,
    #[error("cannot parse feature spec `{0}`")]
    Parse(String),
}

/// Window summary functions, keyed by their integer function code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureFn {
    Empty,
    Raw,
    Mean,
    Median,
    Max,
    Min,
    Range,
    Sum,
    First,
    Last,
    Diff,
    PctChange,
    P25,
    P50,
    P75,
    Iqr,
}

impl FeatureFn {
    /// Every usable code, in code order. Code 2 is reserved.
    pub const ALL: [FeatureFn; 16] = [
        FeatureFn::Empty,
        FeatureFn::Raw,
        FeatureFn::Mean,
        FeatureFn::Median,
        FeatureFn::Max,
        FeatureFn::Min,
        FeatureFn::Range,
        FeatureFn::Sum,
        FeatureFn::First,
        FeatureFn::Last,
        FeatureFn::Diff,
        FeatureFn::PctChange,
        FeatureFn::P25,
        FeatureFn::P50,
        FeatureFn::P75,
        FeatureFn::Iqr,
    ];

    pub fn code(self) -> i32 {
        match self {
            FeatureFn::Empty => -1,
            FeatureFn::Raw => 0,
            FeatureFn::Mean => 1,
            FeatureFn::Median => 3,
            FeatureFn::Max => 4,
            FeatureFn::Min => 5,
            FeatureFn::Range => 6,
            FeatureFn::Sum => 7,
            FeatureFn::First => 8,
            FeatureFn::Last => 9,
            FeatureFn::Diff => 10,
            FeatureFn::PctChange => 11,
            FeatureFn::P25 => 12,
            FeatureFn::P50 => 13,
            FeatureFn::P75 => 14,
            FeatureFn::Iqr => 15,
        }
    }

    pub fn from_code(code: i32) -> Result<Self, FeatureError> {
        FeatureFn::ALL
            .iter()
            .copied()
            .find(|f| f.code() == code)
            .ok_or(FeatureError::InvalidFunctionCode(code))
    }

    /// Column-name suffix. `Raw` columns are suffixed `_1.._wl` instead and
    /// are grouped under `raw` in reports.
    pub fn suffix(self) -> &'static str {
        match self {
            FeatureFn::Empty => "",
            FeatureFn::Raw => "raw",
            FeatureFn::Mean => "avg",
            FeatureFn::Median => "median",
            FeatureFn::Max => "max",
            FeatureFn::Min => "min",
            FeatureFn::Range => "range",
            FeatureFn::Sum => "sum",
            FeatureFn::First => "first",
            FeatureFn::Last => "last",
            FeatureFn::Diff => "diff",
            FeatureFn::PctChange => "pctch",
            FeatureFn::P25 => "p25",
            FeatureFn::P50 => "p50",
            FeatureFn::P75 => "p75",
            FeatureFn::Iqr => "IQR",
        }
    }

    pub fn is_enabled(self) -> bool {
        self != FeatureFn::Empty
    }

    /// Number of output columns for a window of length `wl`.
    pub fn width(self, wl: usize) -> usize {
        match self {
            FeatureFn::Empty => 0,
            FeatureFn::Raw => wl,
            _ => 1,
        }
    }
}

impl Serialize for FeatureFn {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i32(self.code())
    }
}

impl<'de> Deserialize<'de> for FeatureFn {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let code = i32::deserialize(d)?;
        FeatureFn::from_code(code).map_err(serde::de::Error::custom)
    }
}

/// One windowed feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub series: String,
    pub w0: usize,
    pub wl: usize,
    pub fc: FeatureFn,
}

impl FeatureSpec {
    pub fn new(series: impl Into<String>, w0: usize, wl: usize, fc: FeatureFn) -> Self {
        Self {
            series: series.into(),
            w0,
            wl,
            fc,
        }
    }

    /// The deepest lag read is `w0 + wl - 1`, which must not exceed `lookback`.
    pub fn validate(&self, lookback: usize) -> Result<(), FeatureError> {
        if self.w0 > MAX_OFFSET || self.wl == 0 || self.wl > MAX_WINDOW || self.w0 + self.wl - 1 > lookback {
            return Err(FeatureError::InvalidGeometry {
                w0: self.w0,
                wl: self.wl,
                lookback,
            });
        }
        Ok(())
    }

    /// `series|w0|wl|fc`
    pub fn compact(&self) -> String {
        format!("{}|{}|{}|{}", self.series, self.w0, self.wl, self.fc.code())
    }

    /// Report name, ignoring window coordinates: `<series>_<suffix>`.
    pub fn feature_name(&self) -> String {
        format!("{}_{}", self.series, self.fc.suffix())
    }

    pub fn column_names(&self) -> Vec<String> {
        match self.fc {
            FeatureFn::Empty => Vec::new(),
            FeatureFn::Raw => (1..=self.wl).map(|j| format!("{}_{j}", self.series)).collect(),
            fc => vec![format!("{}_{}", self.series, fc.suffix())],
        }
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.compact())
    }
}

impl FromStr for FeatureSpec {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || FeatureError::Parse(s.to_string());
        let mut parts = s.rsplitn(4, '|');
        let fc = parts.next().ok_or_else(err)?;
        let wl = parts.next().ok_or_else(err)?;
        let w0 = parts.next().ok_or_else(err)?;
        let series = parts.next().ok_or_else(err)?;
        Ok(FeatureSpec {
            series: series.to_string(),
            w0: w0.parse().map_err(|_| err())?,
            wl: wl.parse().map_err(|_| err())?,
            fc: FeatureFn::from_code(fc.parse().map_err(|_| err())?)?,
        })
    }
}

/// Values at rows `t - w0 - wl + 1 ..= t - w0`, oldest first.
pub fn window_slice(x: &[f64], t: usize, w0: usize, wl: usize) -> Result<&[f64], FeatureError> {
    let end = t
        .checked_sub(w0)
        .filter(|&e| e + 1 >= wl && e < x.len() && wl > 0)
        .ok_or(FeatureError::InsufficientHistory { t, w0, wl })?;
    Ok(&x[end + 1 - wl..=end])
}

/// Linear-interpolation percentile at rank `q * (n - 1)` of a sorted slice.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn sorted_copy(w: &[f64]) -> Vec<f64> {
    let mut s = w.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Summarizes a window. Returns `(values, degenerate)`, where `degenerate`
/// flags a percentage change whose first value is zero (reported as 0).
pub fn summarize(window: &[f64], fc: FeatureFn) -> Result<(Vec<f64>, bool), FeatureError> {
    if fc == FeatureFn::Empty {
        return Ok((Vec::new(), false));
    }
    if window.is_empty() {
        return Err(FeatureError::EmptyWindow);
    }
    let first = window[0];
    let last = window[window.len() - 1];
    let max = || window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = || window.iter().copied().fold(f64::INFINITY, f64::min);
    let sum = || window.iter().sum::<f64>();
    let v = match fc {
        FeatureFn::Empty => unreachable!(),
        FeatureFn::Raw => return Ok((window.to_vec(), false)),
        FeatureFn::Mean => sum() / window.len() as f64,
        FeatureFn::Median | FeatureFn::P50 => percentile_sorted(&sorted_copy(window), 0.5),
        FeatureFn::Max => max(),
        FeatureFn::Min => min(),
        FeatureFn::Range => max() - min(),
        FeatureFn::Sum => sum(),
        FeatureFn::First => first,
        FeatureFn::Last => last,
        FeatureFn::Diff => last - first,
        FeatureFn::PctChange => {
            if first == 0.0 {
                return Ok((vec![0.0], true));
            }
            (last - first) / first
        }
        FeatureFn::P25 => percentile_sorted(&sorted_copy(window), 0.25),
        FeatureFn::P75 => percentile_sorted(&sorted_copy(window), 0.75),
        FeatureFn::Iqr => {
            let s = sorted_copy(window);
            percentile_sorted(&s, 0.75) - percentile_sorted(&s, 0.25)
        }
    };
    Ok((vec![v], false))
}

/// [`summarize`] keyed by integer function code.
pub fn apply_fc(window: &[f64], fc: i32) -> Result<Vec<f64>, FeatureError> {
    summarize(window, FeatureFn::from_code(fc)?).map(|(v, _)| v)
}

/// Feature columns over the rows `lookback..len` of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub matrix: DenseMatrix,
    pub row_dates: Vec<NaiveDate>,
    /// Dataset row of matrix row 0.
    pub first_row: usize,
    /// Percentage-change windows whose first value was zero.
    pub degenerate_pctch: usize,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn column_names(&self) -> &[String] {
        self.matrix.column_names()
    }

    /// Matrix rows covering dataset rows `range` (clipped to the matrix).
    pub fn rows_for(&self, range: std::ops::Range<usize>) -> std::ops::Range<usize> {
        let start = range.start.max(self.first_row) - self.first_row;
        let end = range.end.max(self.first_row) - self.first_row;
        start.min(self.n_rows())..end.min(self.n_rows())
    }
}

/// Builds one matrix row per dataset row `t >= max_lookback`, concatenating
/// the columns of every spec in order.
pub fn build_matrix(
    d: &AlignedDataset,
    specs: &[FeatureSpec],
    max_lookback: usize,
) -> Result<FeatureMatrix, FeatureError> {
    let enabled = specs.iter().filter(|s| s.fc.is_enabled()).count();
    if enabled > MAX_ENABLED_FEATURES {
        return Err(FeatureError::TooManyFeatures(enabled));
    }
    let mut sources = Vec::with_capacity(specs.len());
    for s in specs {
        s.validate(max_lookback)?;
        let x = d
            .series(&s.series)
            .ok_or_else(|| FeatureError::UnknownSeries(s.series.clone()))?;
        sources.push(x);
    }
    let n_rows = d.len().saturating_sub(max_lookback);
    let names: Vec<String> = specs.iter().flat_map(FeatureSpec::column_names).collect();
    let n_cols = names.len();
    let mut values = Vec::with_capacity(n_rows * n_cols);
    let mut degenerate = 0;
    for t in max_lookback..d.len() {
        for (spec, x) in specs.iter().zip(&sources) {
            let w = window_slice(x, t, spec.w0, spec.wl)?;
            let (v, flag) = summarize(w, spec.fc)?;
            degenerate += usize::from(flag);
            values.extend_from_slice(&v);
        }
    }
    Ok(FeatureMatrix {
        matrix: DenseMatrix::new(n_rows, names, values),
        row_dates: d.dates().get(max_lookback..).unwrap_or(&[]).to_vec(),
        first_row: max_lookback,
        degenerate_pctch: degenerate,
    })
}
