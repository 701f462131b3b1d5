//! Two-arm experiment: repeated genetic searches with and without the
//! indicator pool, persisted per run, then compared.

pub mod config;
pub mod report;
pub mod svg;

pub use config::{load_dataset, DataConfig, ExperimentConfig, GaSection, RunSection};
pub use report::{compare_arms, emit_report, ComparisonReport, FeatureFrequency, MetricComparison};

use crate::booster::{BoostedModel, BoosterError};
use crate::featwin::{build_matrix, FeatureError, FeatureSpec};
use crate::gaopt::{run_ga, EvalContext, EvalError, GaError, OptimResult};
use crate::ingest::{AlignedDataset, IngestError, PoolTag, SplitIndices, BASELINE_SERIES};
use crate::matrix::DenseMatrix;
use crate::metrics::{compute_metrics, permutation_importance, MetricSet, MetricsError, PfiEntry};
use crate::rng::derive_seed;
use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CHAMPION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Ga(#[from] GaError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Model(#[from] BoosterError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("arms hold {baseline} baseline and {augmented} augmented records")]
    UnbalancedArms { baseline: usize, augmented: usize },
    #[error("indicator column `{0}` is not in the dataset")]
    MissingIndicator(String),
    #[error("the augmented pool has no indicator columns")]
    NoIndicators,
    #[error("{arm:?} run {run_index}: champion could not be trained on the test split")]
    DegenerateChampion { arm: PoolTag, run_index: usize },
}

impl ExperimentError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 configuration, 3 data, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Ga(GaError::InvalidConfig(_)) => 2,
            Self::Io { .. } | Self::Ingest(IngestError::Io(_)) => 4,
            Self::Ingest(IngestError::Csv { source, .. })
                if matches!(source.kind(), csv::ErrorKind::Io(_)) =>
            {
                4
            }
            _ => 3,
        }
    }
}

pub fn arm_name(arm: PoolTag) -> &'static str {
    match arm {
        PoolTag::Baseline => "baseline",
        PoolTag::Augmented => "augmented",
    }
}

/// Series an arm may draw features from. The augmented pool adds the
/// configured indicators (every indicator in the dataset when none are
/// configured).
pub fn pool_for(
    arm: PoolTag,
    dataset: &AlignedDataset,
    indicators: &[String],
) -> Result<Vec<String>, ExperimentError> {
    let mut pool: Vec<String> = BASELINE_SERIES.iter().map(|s| s.to_string()).collect();
    if arm == PoolTag::Augmented {
        let extra = if indicators.is_empty() {
            dataset.indicator_names()
        } else {
            for name in indicators {
                if dataset.series(name).is_none() {
                    return Err(ExperimentError::MissingIndicator(name.clone()));
                }
            }
            indicators.to_vec()
        };
        if extra.is_empty() {
            return Err(ExperimentError::NoIndicators);
        }
        pool.extend(extra);
    }
    Ok(pool)
}

/// A champion model with everything needed to rebuild its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChampionModel {
    pub format_version: u32,
    pub arm: PoolTag,
    pub run_index: usize,
    pub seed: u64,
    /// Enabled features in column order.
    pub specs: Vec<FeatureSpec>,
    pub lookback: usize,
    pub split: SplitIndices,
    pub model: BoostedModel,
}

/// Test-row inputs of a champion.
pub struct TestRows {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    pub dates: Vec<NaiveDate>,
}

impl ChampionModel {
    pub fn test_rows(&self, d: &AlignedDataset) -> Result<TestRows, ExperimentError> {
        let m = build_matrix(d, &self.specs, self.lookback)?;
        let rows = m.rows_for(self.split.test());
        let expected = self.split.test_len;
        if rows.len() != expected {
            return Err(IngestError::OutOfRange {
                train_end: self.split.train_end,
                test_len: self.split.test_len,
                len: d.len(),
            }
            .into());
        }
        let target = &d.target()[m.first_row..];
        Ok(TestRows {
            x: m.matrix.select_rows(rows.clone()),
            y: target[rows.clone()].to_vec(),
            dates: m.row_dates[rows].to_vec(),
        })
    }

    pub fn test_metrics(&self, d: &AlignedDataset) -> Result<MetricSet, ExperimentError> {
        let t = self.test_rows(d)?;
        Ok(compute_metrics(&t.y, &self.model.predict(&t.x)?)?)
    }

    /// Permutation importance on the test rows.
    pub fn pfi(
        &self,
        d: &AlignedDataset,
        repeats: usize,
        seed: u64,
    ) -> Result<Vec<PfiEntry>, ExperimentError> {
        let t = self.test_rows(d)?;
        Ok(permutation_importance(&self.model, &t.x, &t.y, repeats, seed)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("champion serializes")
    }
}

/// Seed for the permutations of one run's champion.
pub fn pfi_seed(run_seed: u64) -> u64 {
    derive_seed(run_seed, &[0x9F1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub arm: PoolTag,
    pub run_index: usize,
    pub seed: u64,
    pub optim: OptimResult,
    pub test_metrics: MetricSet,
    pub pfi: Vec<PfiEntry>,
    pub test_dates: Vec<NaiveDate>,
    pub test_actual: Vec<f64>,
    pub test_predictions: Vec<f64>,
}

impl RunRecord {
    /// Enabled features of the champion in column order.
    pub fn specs(&self) -> Vec<FeatureSpec> {
        self.optim
            .decoded
            .features
            .iter()
            .map(|f| f.spec.parse().expect("stored spec parses"))
            .collect()
    }
}

/// Seed of run `run_index`; identical for both arms.
pub fn run_seed(base_seed: u64, run_index: usize) -> u64 {
    base_seed.wrapping_add(run_index as u64)
}

/// Runs one GA search and scores its champion.
pub fn run_one(
    dataset: &AlignedDataset,
    cfg: &ExperimentConfig,
    arm: PoolTag,
    run_index: usize,
) -> Result<(RunRecord, ChampionModel), ExperimentError> {
    let seed = run_seed(cfg.experiment.seed, run_index);
    let split = cfg.split_for(dataset.len())?;
    let pool = pool_for(arm, dataset, &cfg.data.indicators)?;
    let ctx = EvalContext {
        dataset,
        split,
        lookback: cfg.data.lookback,
        fitness_floor: cfg.ga.fitness_floor,
        holdout: cfg.ga.holdout,
    };
    let ga = run_ga(&ctx, &cfg.ga.to_ga_config(seed), &pool)?;
    let champ = ga
        .champion
        .ok_or(ExperimentError::DegenerateChampion { arm, run_index })?;
    let model = ChampionModel {
        format_version: CHAMPION_FORMAT_VERSION,
        arm,
        run_index,
        seed,
        specs: champ.decoded.enabled(),
        lookback: cfg.data.lookback,
        split,
        model: champ.model,
    };
    let pfi = permutation_importance(
        &model.model,
        &champ.matrix.matrix.select_rows(champ.score_rows.clone()),
        &champ.actual,
        cfg.experiment.pfi_repeats,
        pfi_seed(seed),
    )?;
    let record = RunRecord {
        arm,
        run_index,
        seed,
        optim: ga.result,
        test_metrics: champ.metrics,
        pfi,
        test_dates: champ.matrix.row_dates[champ.score_rows].to_vec(),
        test_actual: champ.actual,
        test_predictions: champ.predictions,
    };
    Ok((record, model))
}

/// File layout of a results directory.
#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_path(&self, arm: PoolTag, run_index: usize) -> PathBuf {
        self.root
            .join("runs")
            .join(format!("{}_{run_index:03}.json", arm_name(arm)))
    }

    pub fn model_path(&self, arm: PoolTag, run_index: usize) -> PathBuf {
        self.root
            .join("models")
            .join(format!("{}_{run_index:03}.json", arm_name(arm)))
    }

    /// A previously completed run, when both its files exist and match the seed.
    pub fn load_completed(&self, arm: PoolTag, run_index: usize, seed: u64) -> Option<RunRecord> {
        if !self.model_path(arm, run_index).exists() {
            return None;
        }
        let rec: RunRecord = read_json(&self.run_path(arm, run_index)).ok()?;
        (rec.arm == arm && rec.run_index == run_index && rec.seed == seed).then_some(rec)
    }

    pub fn save(&self, record: &RunRecord, model: &ChampionModel) -> Result<(), ExperimentError> {
        write_atomic(&self.model_path(record.arm, record.run_index), &model.to_json())?;
        write_atomic(
            &self.run_path(record.arm, record.run_index),
            &serde_json::to_string_pretty(record).expect("record serializes"),
        )
    }

    /// Every run record in the store, ordered by arm then run index.
    pub fn load_all(&self) -> Result<Vec<RunRecord>, ExperimentError> {
        let dir = self.root.join("runs");
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| ExperimentError::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut out: Vec<RunRecord> = paths.iter().map(|p| read_json(p)).collect::<Result<_, _>>()?;
        out.sort_by_key(|r| (r.arm, r.run_index));
        Ok(out)
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| ExperimentError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    }
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, contents).map_err(|e| ExperimentError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| ExperimentError::io(path, e))
}

/// Runs `experiment.runs` searches for each requested arm. With a store,
/// each run is written as soon as it finishes and completed runs found in
/// the store are reused instead of retrained.
pub fn run_arms(
    dataset: &AlignedDataset,
    cfg: &ExperimentConfig,
    arms: &[PoolTag],
    store: Option<&RunStore>,
) -> Result<Vec<RunRecord>, ExperimentError> {
    cfg.validate()?;
    for &arm in arms {
        pool_for(arm, dataset, &cfg.data.indicators)?;
    }
    cfg.split_for(dataset.len())?;
    let jobs: Vec<(PoolTag, usize)> = arms
        .iter()
        .flat_map(|&a| (0..cfg.experiment.runs).map(move |r| (a, r)))
        .collect();
    let mut records = jobs
        .par_iter()
        .map(|&(arm, r)| {
            let seed = run_seed(cfg.experiment.seed, r);
            if let Some(rec) = store.and_then(|s| s.load_completed(arm, r, seed)) {
                log::info!("{} run {r}: reusing stored result", arm_name(arm));
                return Ok(rec);
            }
            let (rec, model) = run_one(dataset, cfg, arm, r)?;
            log::info!(
                "{} run {r}: test R² {:.4}, RMSE {:.6}",
                arm_name(arm),
                rec.test_metrics.r2,
                rec.test_metrics.rmse
            );
            if let Some(s) = store {
                s.save(&rec, &model)?;
            }
            Ok(rec)
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    records.sort_by_key(|r| (r.arm, r.run_index));
    Ok(records)
}

/// Both arms, then the comparison.
pub fn run_experiment(
    dataset: &AlignedDataset,
    cfg: &ExperimentConfig,
    store: Option<&RunStore>,
) -> Result<(Vec<RunRecord>, ComparisonReport), ExperimentError> {
    let records = run_arms(dataset, cfg, &[PoolTag::Baseline, PoolTag::Augmented], store)?;
    let report = compare_arms(&records, Some(cfg))?;
    Ok((records, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig, SIGNAL_COLUMN};

    pub(crate) fn smoke_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.data.indicators.clear();
        cfg.data.train_rows = 46;
        cfg.data.test_rows = 14;
        cfg.ga.generations = 3;
        cfg.ga.population = 6;
        cfg.ga.parents_kept = 2;
        cfg.experiment.runs = 2;
        cfg.experiment.pfi_repeats = 3;
        cfg
    }

    #[test]
    fn pools() {
        let d = generate(&SynthConfig::smoke(0)).unwrap().dataset;
        assert_eq!(
            pool_for(PoolTag::Baseline, &d, &[]).unwrap(),
            BASELINE_SERIES.to_vec()
        );
        let aug = pool_for(PoolTag::Augmented, &d, &[]).unwrap();
        assert_eq!(aug.len(), 6);
        assert!(aug.contains(&SIGNAL_COLUMN.to_string()));
        assert!(matches!(
            pool_for(PoolTag::Augmented, &d, &["nope".into()]),
            Err(ExperimentError::MissingIndicator(_))
        ));
    }

    #[test]
    fn champion_reload_reproduces_metrics_and_pfi() {
        let d = generate(&SynthConfig::smoke(1)).unwrap().dataset;
        let cfg = smoke_config();
        let (rec, model) = run_one(&d, &cfg, PoolTag::Augmented, 0).unwrap();
        let back: ChampionModel = serde_json::from_str(&model.to_json()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.test_metrics(&d).unwrap(), rec.test_metrics);
        assert_eq!(Some(rec.test_metrics), rec.optim.best_metrics);
        assert_eq!(
            back.pfi(&d, cfg.experiment.pfi_repeats, pfi_seed(rec.seed))
                .unwrap(),
            rec.pfi
        );
    }

    #[test]
    fn store_resumes_without_retraining() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        let d = generate(&SynthConfig::smoke(2)).unwrap().dataset;
        let cfg = smoke_config();
        let first = run_arms(&d, &cfg, &[PoolTag::Baseline], Some(&store)).unwrap();
        assert_eq!(first.len(), 2);
        // A tampered record proves the stored copy is reused.
        let mut tampered = first[1].clone();
        tampered.test_metrics.mae = 123.0;
        write_atomic(
            &store.run_path(PoolTag::Baseline, 1),
            &serde_json::to_string(&tampered).unwrap(),
        )
        .unwrap();
        let second = run_arms(&d, &cfg, &[PoolTag::Baseline], Some(&store)).unwrap();
        assert_eq!(second[0], first[0]);
        assert_eq!(second[1].test_metrics.mae, 123.0);
        assert_eq!(store.load_all().unwrap(), second);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(ExperimentError::Config("x".into()).exit_code(), 2);
        assert_eq!(ExperimentError::NoIndicators.exit_code(), 3);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "x");
        assert_eq!(ExperimentError::io(Path::new("a"), io).exit_code(), 4);
        let err = load_dataset(&DataConfig {
            prices: Some("/definitely/missing.csv".into()),
            ..Default::default()
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), 4, "{err}");
    }
}
