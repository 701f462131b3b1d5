//! Arm comparison and report files.

use super::{arm_name, svg, write_atomic, ExperimentConfig, ExperimentError, RunRecord};
use crate::featwin::FeatureSpec;
use crate::ingest::PoolTag;
use crate::metrics::{
    histogram_overlap, mann_whitney_u, MetricSet, PfiEntry, UTestResult, DEFAULT_HISTOGRAM_BINS,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const METRICS: [&str; 3] = ["r2", "mae", "rmse"];

fn metric_value(m: &MetricSet, name: &str) -> f64 {
    match name {
        "r2" => m.r2,
        "mae" => m.mae,
        "rmse" => m.rmse,
        _ => unreachable!("unknown metric {name}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: String,
    pub baseline_mean: f64,
    pub augmented_mean: f64,
    /// `augmented_mean - baseline_mean`.
    pub mean_difference: f64,
    /// `(augmented_mean - baseline_mean) / |baseline_mean|`, absent when the
    /// baseline mean is zero.
    pub percent_change: Option<f64>,
    pub overlap: f64,
    /// Two-sided test with the augmented values as the first sample.
    pub u_test: UTestResult,
    pub baseline_values: Vec<f64>,
    pub augmented_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrequency {
    /// `<series>_<suffix>`, window coordinates ignored.
    pub feature: String,
    /// Champions using the feature.
    pub count: usize,
    /// Mean over those champions of the feature's permutation drop (summed
    /// over its columns for raw windows).
    pub mean_r2_drop: f64,
}

/// Highest-R² champion of an arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub arm: PoolTag,
    pub run_index: usize,
    pub test_metrics: MetricSet,
    pub features: Vec<String>,
    pub pfi: Vec<PfiEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub runs_per_arm: usize,
    pub histogram_bins: usize,
    pub metrics: Vec<MetricComparison>,
    /// Over augmented champions.
    pub feature_frequency: Vec<FeatureFrequency>,
    pub baseline_feature_frequency: Vec<FeatureFrequency>,
    pub headline: Vec<Headline>,
    pub config_snapshot: Option<ExperimentConfig>,
}

impl ComparisonReport {
    pub fn metric(&self, name: &str) -> Option<&MetricComparison> {
        self.metrics.iter().find(|m| m.metric == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-slot drops: PFI entries are per column, and a raw window spans
/// several columns.
fn slot_drops(specs: &[FeatureSpec], pfi: &[PfiEntry]) -> Vec<f64> {
    let mut owner = Vec::new();
    for (slot, s) in specs.iter().enumerate() {
        owner.extend(std::iter::repeat_n(slot, s.column_names().len()));
    }
    let mut drops = vec![0.0; specs.len()];
    let mut by_column: Vec<&PfiEntry> = pfi.iter().collect();
    by_column.sort_by_key(|e| e.column);
    for e in by_column {
        if let Some(&slot) = owner.get(e.column) {
            drops[slot] += e.r2_drop;
        }
    }
    drops
}

pub fn feature_frequency(records: &[&RunRecord]) -> Vec<FeatureFrequency> {
    let mut acc: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for r in records {
        let specs = r.specs();
        for (s, drop) in specs.iter().zip(slot_drops(&specs, &r.pfi)) {
            let e = acc.entry(s.feature_name()).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += drop;
        }
    }
    let mut out: Vec<FeatureFrequency> = acc
        .into_iter()
        .map(|(feature, (count, total))| FeatureFrequency {
            feature,
            count,
            mean_r2_drop: total / count as f64,
        })
        .collect();
    // Name order from the map breaks count ties.
    out.sort_by_key(|f| std::cmp::Reverse(f.count));
    out
}

fn headline(arm: PoolTag, records: &[&RunRecord]) -> Option<Headline> {
    let best = records.iter().copied().reduce(|best, r| {
        if r.test_metrics.r2 > best.test_metrics.r2 {
            r
        } else {
            best
        }
    })?;
    Some(Headline {
        arm,
        run_index: best.run_index,
        test_metrics: best.test_metrics,
        features: best
            .optim
            .decoded
            .features
            .iter()
            .map(|f| f.name.clone())
            .collect(),
        pfi: best.pfi.clone(),
    })
}

/// Compares the metric distributions of the two arms.
pub fn compare_arms(
    records: &[RunRecord],
    config: Option<&ExperimentConfig>,
) -> Result<ComparisonReport, ExperimentError> {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.arm, r.run_index));
    let base: Vec<&RunRecord> = sorted
        .iter()
        .copied()
        .filter(|r| r.arm == PoolTag::Baseline)
        .collect();
    let aug: Vec<&RunRecord> = sorted
        .iter()
        .copied()
        .filter(|r| r.arm == PoolTag::Augmented)
        .collect();
    if base.is_empty() || base.len() != aug.len() {
        return Err(ExperimentError::UnbalancedArms {
            baseline: base.len(),
            augmented: aug.len(),
        });
    }
    let bins = config.map_or(DEFAULT_HISTOGRAM_BINS, |c| c.experiment.histogram_bins);

    let mut metrics = Vec::with_capacity(METRICS.len());
    for name in METRICS {
        let b: Vec<f64> = base.iter().map(|r| metric_value(&r.test_metrics, name)).collect();
        let a: Vec<f64> = aug.iter().map(|r| metric_value(&r.test_metrics, name)).collect();
        let (bm, am) = (mean(&b), mean(&a));
        metrics.push(MetricComparison {
            metric: name.to_string(),
            baseline_mean: bm,
            augmented_mean: am,
            mean_difference: am - bm,
            percent_change: (bm != 0.0).then(|| (am - bm) / bm.abs()),
            overlap: histogram_overlap(&b, &a, bins)?,
            u_test: mann_whitney_u(&a, &b)?,
            baseline_values: b,
            augmented_values: a,
        });
    }

    Ok(ComparisonReport {
        runs_per_arm: base.len(),
        histogram_bins: bins,
        metrics,
        feature_frequency: feature_frequency(&aug),
        baseline_feature_frequency: feature_frequency(&base),
        headline: [(PoolTag::Baseline, &base), (PoolTag::Augmented, &aug)]
            .into_iter()
            .filter_map(|(arm, recs)| headline(arm, recs))
            .collect(),
        config_snapshot: config.cloned(),
    })
}

/// Writes `report.json`, `runs/*.json` and the plots under `plots/`.
/// Returns the written paths.
pub fn emit_report(
    report: &ComparisonReport,
    records: &[RunRecord],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut written = Vec::new();
    let mut put = |rel: PathBuf, text: &str| -> Result<(), ExperimentError> {
        let path = out_dir.join(rel);
        write_atomic(&path, text)?;
        written.push(path);
        Ok(())
    };
    put("report.json".into(), &report.to_json())?;
    for r in records {
        put(
            PathBuf::from("runs").join(format!("{}_{:03}.json", arm_name(r.arm), r.run_index)),
            &serde_json::to_string_pretty(r).expect("record serializes"),
        )?;
    }
    for m in &report.metrics {
        let title = format!("Test {} across runs", m.metric.to_uppercase());
        put(
            PathBuf::from("plots").join(format!("hist_{}.svg", m.metric)),
            &svg::histogram(
                &title,
                &m.baseline_values,
                &m.augmented_values,
                report.histogram_bins,
            ),
        )?;
    }
    for h in &report.headline {
        let arm = arm_name(h.arm);
        let Some(rec) = records
            .iter()
            .find(|r| r.arm == h.arm && r.run_index == h.run_index)
        else {
            continue;
        };
        put(
            PathBuf::from("plots").join(format!("overlay_{arm}.svg")),
            &svg::overlay(
                &format!("{arm} champion (run {}): predicted vs actual", h.run_index),
                &rec.test_dates,
                &rec.test_actual,
                &rec.test_predictions,
            ),
        )?;
        let color = match h.arm {
            PoolTag::Baseline => svg::BASELINE_COLOR,
            PoolTag::Augmented => svg::AUGMENTED_COLOR,
        };
        put(
            PathBuf::from("plots").join(format!("pfi_{arm}.svg")),
            &svg::bar_chart(
                &format!("{arm} champion (run {}): permutation importance", h.run_index),
                &h.pfi.iter().map(|e| e.feature.clone()).collect::<Vec<_>>(),
                &h.pfi.iter().map(|e| e.r2_drop).collect::<Vec<_>>(),
                color,
            ),
        )?;
    }
    if !report.feature_frequency.is_empty() {
        put(
            PathBuf::from("plots").join("feature_frequency.svg"),
            &svg::bar_chart(
                "Feature frequency across augmented champions",
                &report
                    .feature_frequency
                    .iter()
                    .map(|f| f.feature.clone())
                    .collect::<Vec<_>>(),
                &report
                    .feature_frequency
                    .iter()
                    .map(|f| f.count as f64)
                    .collect::<Vec<_>>(),
                svg::AUGMENTED_COLOR,
            ),
        )?;
    }
    Ok(written)
}
