//! TOML experiment configuration.
//!
//! ```toml
//! [data]
//! dataset = "data/aligned.csv"   # or prices + covid
//! horizon = 7
//! lookback = 14
//! train_rows = 358
//! test_rows = 200
//!
//! [ga]
//! generations = 150
//!
//! [experiment]
//! runs = 31
//! seed = 42
//! ```
//!
//! Every key is optional. Relative paths are resolved against the directory
//! of the config file.

use super::ExperimentError;
use crate::featwin::DEFAULT_LOOKBACK;
use crate::gaopt::{Crossover, GaConfig};
use crate::ingest::{
    align, calendar_features, chronological_split, load_indicators, load_prices, log_returns, AlignedDataset,
    GapPolicy, IngestError, SplitIndices, DEFAULT_INDICATORS,
};
use crate::metrics::{DEFAULT_HISTOGRAM_BINS, DEFAULT_PFI_REPEATS};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Aligned dataset written by `featgate ingest`. Takes precedence over
    /// `prices` and `covid`.
    pub dataset: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub covid: Option<PathBuf>,
    pub price_date_column: String,
    pub price_close_column: String,
    pub covid_date_column: String,
    /// Region filter on the indicator file; `None` keeps every row.
    pub location_column: Option<String>,
    pub location: Option<String>,
    /// Indicator columns for the augmented pool. Empty means every
    /// indicator column in the data.
    pub indicators: Vec<String>,
    pub gap_policy: GapPolicy,
    pub horizon: usize,
    pub lookback: usize,
    pub train_rows: usize,
    pub test_rows: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            prices: None,
            covid: None,
            price_date_column: "Date".into(),
            price_close_column: "Close".into(),
            covid_date_column: "date".into(),
            location_column: Some("location".into()),
            location: Some("United States".into()),
            indicators: DEFAULT_INDICATORS.iter().map(|s| s.to_string()).collect(),
            gap_policy: GapPolicy::default(),
            horizon: 7,
            lookback: DEFAULT_LOOKBACK,
            train_rows: 358,
            test_rows: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaSection {
    pub generations: usize,
    pub population: usize,
    pub parents_kept: usize,
    pub crossover: Crossover,
    pub mutation_rate: f64,
    pub fitness_floor: f64,
    /// Score fitness on this many trailing training rows instead of the test rows.
    pub holdout: Option<usize>,
}

impl Default for GaSection {
    fn default() -> Self {
        let d = GaConfig::default();
        Self {
            generations: d.generations,
            population: d.population,
            parents_kept: d.parents_kept,
            crossover: d.crossover,
            mutation_rate: d.mutation_rate,
            fitness_floor: d.fitness_floor,
            holdout: None,
        }
    }
}

impl GaSection {
    pub fn to_ga_config(&self, seed: u64) -> GaConfig {
        GaConfig {
            generations: self.generations,
            population: self.population,
            parents_kept: self.parents_kept,
            crossover: self.crossover,
            mutation_rate: self.mutation_rate,
            seed,
            fitness_floor: self.fitness_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Independent GA runs per arm.
    pub runs: usize,
    /// Run `r` of either arm uses seed `seed + r`.
    pub seed: u64,
    pub pfi_repeats: usize,
    pub histogram_bins: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            runs: 31,
            seed: 42,
            pfi_repeats: DEFAULT_PFI_REPEATS,
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub ga: GaSection,
    pub experiment: RunSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file, resolving relative paths against
    /// its directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.data.dataset,
            &mut self.data.prices,
            &mut self.data.covid,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        let d = &self.data;
        if d.horizon == 0 {
            return bad("data.horizon must be at least 1".into());
        }
        if d.lookback < 1 {
            return bad("data.lookback must be at least 1".into());
        }
        if d.train_rows <= d.lookback || d.test_rows == 0 {
            return bad(format!(
                "data.train_rows ({}) must exceed lookback ({}) and data.test_rows must be positive",
                d.train_rows, d.lookback
            ));
        }
        if d.location.is_some() != d.location_column.is_some() {
            return bad("data.location and data.location_column must be set together".into());
        }
        if self.experiment.runs < 2 {
            return bad(format!("experiment.runs = {} < 2", self.experiment.runs));
        }
        if self.experiment.pfi_repeats == 0 {
            return bad("experiment.pfi_repeats must be at least 1".into());
        }
        if self.experiment.histogram_bins < 2 {
            return bad("experiment.histogram_bins must be at least 2".into());
        }
        if let Some(h) = self.ga.holdout {
            if h == 0 || h + d.lookback >= d.train_rows {
                return bad(format!("ga.holdout = {h} leaves no training rows"));
            }
        }
        self.ga
            .to_ga_config(0)
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))
    }

    /// Splits `len` aligned rows. The test block takes the last
    /// `test_rows` rows when the dataset is too short for
    /// `train_rows + test_rows`.
    pub fn split_for(&self, len: usize) -> Result<SplitIndices, ExperimentError> {
        let d = &self.data;
        let train_end = d.train_rows.min(len.saturating_sub(d.test_rows));
        if train_end < d.train_rows {
            log::warn!(
                "dataset has {len} rows; training block shortened to {train_end} rows (requested {})",
                d.train_rows
            );
        }
        if train_end <= d.lookback {
            return Err(IngestError::OutOfRange {
                train_end: d.train_rows,
                test_len: d.test_rows,
                len,
            }
            .into());
        }
        Ok(chronological_split(len, train_end, d.test_rows)?)
    }
}

/// Builds the aligned dataset described by `data`: either the saved CSV or
/// a fresh alignment of the price and indicator files.
pub fn load_dataset(data: &DataConfig) -> Result<AlignedDataset, ExperimentError> {
    if let Some(path) = &data.dataset {
        let d = AlignedDataset::read_csv(path)?;
        if d.horizon() != data.horizon {
            return Err(ExperimentError::Config(format!(
                "{} was built with horizon {}, config says {}",
                path.display(),
                d.horizon(),
                data.horizon
            )));
        }
        return Ok(d);
    }
    let prices = data
        .prices
        .as_deref()
        .ok_or_else(|| ExperimentError::Config("data.dataset or data.prices is required".into()))?;
    ingest_files(data, prices, data.covid.as_deref())
}

/// Aligns a price file and an optional indicator file.
pub fn ingest_files(
    data: &DataConfig,
    prices: &Path,
    covid: Option<&Path>,
) -> Result<AlignedDataset, ExperimentError> {
    let p = load_prices(prices, &data.price_date_column, &data.price_close_column)?;
    let returns = log_returns(&p)?;
    let (dow, doy) = calendar_features(&returns.dates);
    let table = match covid {
        Some(path) => {
            // An empty column or value turns the row filter off.
            let col = data.location_column.as_deref().filter(|v| !v.is_empty());
            let loc = col.zip(data.location.as_deref().filter(|v| !v.is_empty()));
            Some(load_indicators(
                path,
                &data.covid_date_column,
                loc,
                &data.indicators,
            )?)
        }
        None => None,
    };
    Ok(align(
        &returns,
        (&dow, &doy),
        table.as_ref(),
        data.horizon,
        data.gap_policy,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.data.indicators.len(), 45);
        assert_eq!((cfg.data.train_rows, cfg.data.test_rows), (358, 200));
        assert_eq!((cfg.experiment.runs, cfg.ga.generations), (31, 150));
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.ga.holdout = Some(40);
        cfg.data.dataset = Some("x.csv".into());
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        for doc in [
            "[experiment]\nruns = 1",
            "[ga]\npopulation = 3",
            "[data]\nhorizon = 0",
            "[data]\nunknown = 1",
            "[ga]\nholdout = 400",
            "[data]\nlocation_column = \"x\"\nlocation = \"y\"\ntrain_rows = 10",
            "not toml [",
        ] {
            assert!(
                matches!(ExperimentConfig::from_toml(doc), Err(ExperimentError::Config(_))),
                "{doc}"
            );
        }
    }

    #[test]
    fn split_shrinks_training_block_on_short_data() {
        let cfg = ExperimentConfig::default();
        assert_eq!(
            cfg.split_for(558).unwrap(),
            SplitIndices {
                train_end: 358,
                test_len: 200
            }
        );
        assert_eq!(
            cfg.split_for(550).unwrap(),
            SplitIndices {
                train_end: 350,
                test_len: 200
            }
        );
        assert!(cfg.split_for(210).is_err());
    }

    #[test]
    fn relative_paths_follow_config_dir() {
        let mut cfg = ExperimentConfig::default();
        cfg.data.prices = Some("p.csv".into());
        cfg.data.covid = Some("/abs/c.csv".into());
        cfg.resolve_paths(Path::new("/cfg"));
        assert_eq!(cfg.data.prices.unwrap(), PathBuf::from("/cfg/p.csv"));
        assert_eq!(cfg.data.covid.unwrap(), PathBuf::from("/abs/c.csv"));
    }
}
