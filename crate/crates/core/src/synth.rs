//! Synthetic datasets with a planted signal.
//!
//! The target at row `t` is `scale * (weight * g(t) + noise_sd * e(t))`,
//! where `g` is the standardized mean of a hidden AR(1) indicator over the
//! window `[t - w0 - wl + 1, t - w0]` and `e` is standard normal noise. The
//! `Returns` column is the target shifted back by the horizon, so the usual
//! `target[t] = Returns[t + horizon]` relation holds.

use crate::ingest::{
    calendar_features, AlignedDataset, IndicatorTable, IngestError, PoolTag, PriceSeries, RETURNS,
};
use crate::rng::rng_from;
use chrono::{Days, NaiveDate};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

pub const SIGNAL_COLUMN: &str = "hidden_signal";
pub const LOCATION: &str = "United States";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Aligned rows in the resulting dataset.
    pub rows: usize,
    pub horizon: usize,
    pub start: NaiveDate,
    pub signal_weight: f64,
    pub noise_sd: f64,
    /// AR(1) coefficient of the hidden indicator and of the distractors.
    pub phi: f64,
    pub w0: usize,
    pub wl: usize,
    pub distractors: usize,
    /// Multiplier bringing returns to a realistic daily magnitude.
    pub scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            rows: 558,
            horizon: 7,
            start: NaiveDate::from_ymd_opt(2020, 12, 11).unwrap(),
            signal_weight: 0.6,
            noise_sd: 0.4,
            phi: 0.5,
            w0: 0,
            wl: 4,
            distractors: 4,
            scale: 0.02,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// 60 rows, two distractors: small enough for end-to-end smoke runs.
    pub fn smoke(seed: u64) -> Self {
        Self {
            rows: 60,
            distractors: 2,
            seed,
            ..Self::default()
        }
    }

    /// Target without any planted signal.
    pub fn white_noise(rows: usize, seed: u64) -> Self {
        Self {
            rows,
            signal_weight: 0.0,
            noise_sd: 1.0,
            seed,
            ..Self::default()
        }
    }

    pub fn indicator_names(&self) -> Vec<String> {
        std::iter::once(SIGNAL_COLUMN.to_string())
            .chain((1..=self.distractors).map(|i| format!("distractor_{i}")))
            .collect()
    }
}

/// A generated dataset together with the raw inputs it can be rebuilt from.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub dataset: AlignedDataset,
    /// `rows + horizon + 1` closes, one day before the first aligned date onward.
    pub prices: PriceSeries,
    /// Indicators on every return date.
    pub indicators: IndicatorTable,
    /// Noise-free part of the target, `scale * weight * g(t)`.
    pub signal: Vec<f64>,
}

fn ar1(n: usize, phi: f64, rng: &mut impl rand::Rng) -> Vec<f64> {
    let innov = (1.0 - phi * phi).sqrt();
    let mut x = Vec::with_capacity(n);
    let mut prev: f64 = StandardNormal.sample(rng);
    for _ in 0..n {
        let e: f64 = StandardNormal.sample(rng);
        prev = phi * prev + innov * e;
        x.push(prev);
    }
    x
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData, IngestError> {
    if cfg.horizon == 0 {
        return Err(IngestError::InvalidHorizon);
    }
    let n = cfg.rows;
    let total = n + cfg.horizon;
    let burn = cfg.w0 + cfg.wl.max(1) - 1;
    let mut rng = rng_from(cfg.seed, &[0x5147]);

    let hidden = ar1(total + burn, cfg.phi, &mut rng);
    let mut g: Vec<f64> = (0..n)
        .map(|t| {
            let end = t + burn - cfg.w0;
            let w = &hidden[end + 1 - cfg.wl.max(1)..=end];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect();
    let mean = g.iter().sum::<f64>() / n.max(1) as f64;
    let sd = (g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt();
    for v in &mut g {
        *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
    }

    let signal: Vec<f64> = g.iter().map(|v| cfg.scale * cfg.signal_weight * v).collect();
    let mut returns = vec![0.0; total];
    for r in returns.iter_mut().take(cfg.horizon) {
        let e: f64 = StandardNormal.sample(&mut rng);
        *r = cfg.scale * cfg.noise_sd * e;
    }
    for t in 0..n {
        let e: f64 = StandardNormal.sample(&mut rng);
        returns[t + cfg.horizon] = signal[t] + cfg.scale * cfg.noise_sd * e;
    }

    let dates: Vec<NaiveDate> = (0..total as u64).map(|i| cfg.start + Days::new(i)).collect();
    let mut indicator_cols = vec![(SIGNAL_COLUMN.to_string(), hidden[burn..].to_vec())];
    for name in cfg.indicator_names().into_iter().skip(1) {
        indicator_cols.push((name, ar1(total, cfg.phi, &mut rng)));
    }

    let (dow, doy) = calendar_features(&dates[..n]);
    let mut series = vec![
        (RETURNS.to_string(), returns[..n].to_vec()),
        (dow.name, dow.values),
        (doy.name, doy.values),
    ];
    series.extend(
        indicator_cols
            .iter()
            .map(|(name, v)| (name.clone(), v[..n].to_vec())),
    );
    let dataset = AlignedDataset::from_parts(
        dates[..n].to_vec(),
        series,
        returns[cfg.horizon..].to_vec(),
        cfg.horizon,
        PoolTag::Augmented,
    )?;

    let mut price_dates = vec![cfg.start - Days::new(1)];
    price_dates.extend_from_slice(&dates);
    let mut close = vec![30_000.0];
    for r in &returns {
        close.push(close.last().unwrap() * r.exp());
    }
    let prices = PriceSeries::new(price_dates, close)?;
    let indicators = IndicatorTable::new(
        dates,
        indicator_cols
            .into_iter()
            .map(|(name, v)| (name, v.into_iter().map(Some).collect()))
            .collect(),
    )?;
    Ok(SynthData {
        dataset,
        prices,
        indicators,
        signal,
    })
}

/// Writes `prices.csv` (`Date,Close`) and `indicators.csv`
/// (`date,location,<indicator columns>`) into `dir`.
pub fn write_csvs(data: &SynthData, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut p = std::io::BufWriter::new(std::fs::File::create(dir.join("prices.csv"))?);
    writeln!(p, "Date,Close")?;
    for (d, c) in data.prices.dates().iter().zip(data.prices.close()) {
        writeln!(p, "{d},{c}")?;
    }
    p.flush()?;

    let mut w = csv::Writer::from_path(dir.join("indicators.csv"))?;
    let cols = data.indicators.columns();
    let mut header = vec!["date".to_string(), "location".to_string()];
    header.extend(cols.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    for (i, d) in data.indicators.dates().iter().enumerate() {
        let mut rec = vec![d.to_string(), LOCATION.to_string()];
        rec.extend(
            cols.iter()
                .map(|(_, v)| v[i].map(|x| x.to_string()).unwrap_or_default()),
        );
        w.write_record(&rec)?;
    }
    w.flush()
}
