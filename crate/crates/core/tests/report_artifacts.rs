//! Written reports: SVG structure and counts, report.json round trip, and
//! resuming an interrupted experiment.

use featgate::experiment::{
    emit_report, run_experiment, ComparisonReport, ExperimentConfig, RunRecord, RunStore,
};
use featgate::ingest::PoolTag;
use featgate::synth::{generate, SynthConfig};
use std::path::Path;

fn config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.data.indicators.clear();
    cfg.data.train_rows = 46;
    cfg.data.test_rows = 14;
    cfg.ga.generations = 3;
    cfg.ga.population = 6;
    cfg.ga.parents_kept = 2;
    cfg.experiment.runs = 4;
    cfg.experiment.pfi_repeats = 3;
    cfg.experiment.histogram_bins = 5;
    cfg
}

fn run(dir: &Path) -> (Vec<RunRecord>, ComparisonReport) {
    let d = generate(&SynthConfig::smoke(5)).unwrap().dataset;
    let cfg = config();
    let store = RunStore::new(dir);
    let (records, report) = run_experiment(&d, &cfg, Some(&store)).unwrap();
    emit_report(&report, &records, dir).unwrap();
    (records, report)
}

/// Bin membership by comparing against explicit edges; the top edge is
/// inclusive.
fn oracle_counts(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let edges: Vec<f64> = (0..=bins)
        .map(|b| lo + (hi - lo) * b as f64 / bins as f64)
        .collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let b = if hi > lo {
            (0..bins).find(|&b| v < edges[b + 1]).unwrap_or(bins - 1)
        } else {
            0
        };
        counts[b] += 1;
    }
    counts
}

#[test]
fn histograms_match_independent_binning() {
    let dir = tempfile::tempdir().unwrap();
    let (_, report) = run(dir.path());
    for m in &report.metrics {
        let text = std::fs::read_to_string(dir.path().join(format!("plots/hist_{}.svg", m.metric))).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        let all: Vec<f64> = m
            .baseline_values
            .iter()
            .chain(&m.augmented_values)
            .copied()
            .collect();
        let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let unit: f64 = doc
            .descendants()
            .find(|n| n.attribute("class") == Some("bars"))
            .and_then(|n| n.attribute("data-unit"))
            .unwrap()
            .parse()
            .unwrap();
        for (arm, values) in [
            ("baseline", &m.baseline_values),
            ("augmented", &m.augmented_values),
        ] {
            let want = oracle_counts(values, lo, hi, 5);
            let bars: Vec<_> = doc
                .descendants()
                .filter(|n| n.attribute("class") == Some("bar") && n.attribute("data-arm") == Some(arm))
                .collect();
            assert_eq!(bars.len(), 5);
            for bar in bars {
                let b: usize = bar.attribute("data-bin").unwrap().parse().unwrap();
                let count: usize = bar.attribute("data-count").unwrap().parse().unwrap();
                let height: f64 = bar.attribute("height").unwrap().parse().unwrap();
                assert_eq!(count, want[b], "{} {arm} bin {b}", m.metric);
                assert!((height - count as f64 * unit).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn expected_artifacts_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let (records, report) = run(dir.path());
    let plots = dir.path().join("plots");
    for name in [
        "hist_r2.svg",
        "hist_mae.svg",
        "hist_rmse.svg",
        "overlay_baseline.svg",
        "overlay_augmented.svg",
    ] {
        let text = std::fs::read_to_string(plots.join(name)).unwrap();
        roxmltree::Document::parse(&text).unwrap();
    }
    let pfi = std::fs::read_dir(&plots)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .starts_with("pfi_")
        })
        .count();
    assert!(pfi >= 1);
    for name in ["overlay_baseline.svg", "overlay_augmented.svg"] {
        let text = std::fs::read_to_string(plots.join(name)).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        for class in ["actual", "predicted"] {
            let line = doc
                .descendants()
                .find(|n| n.attribute("class") == Some(class))
                .unwrap();
            assert_eq!(line.attribute("points").unwrap().split(' ').count(), 14);
        }
    }
    assert_eq!(records.len(), 8);
    assert_eq!(report.runs_per_arm, 4);
    for arm in [PoolTag::Baseline, PoolTag::Augmented] {
        for r in 0..4 {
            let store = RunStore::new(dir.path());
            assert!(store.run_path(arm, r).is_file());
            assert!(store.model_path(arm, r).is_file());
        }
    }
}

#[test]
fn report_json_round_trips_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path());
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let parsed: ComparisonReport = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed.to_json(), text);
}

#[test]
fn interrupted_experiment_resumes_to_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path());
    let full = std::fs::read(dir.path().join("report.json")).unwrap();
    let store = RunStore::new(dir.path());
    let lost = store.run_path(PoolTag::Augmented, 2);
    let before = std::fs::read(&lost).unwrap();
    std::fs::remove_file(&lost).unwrap();
    std::fs::remove_file(store.model_path(PoolTag::Augmented, 2)).unwrap();

    run(dir.path());
    assert_eq!(std::fs::read(&lost).unwrap(), before);
    assert_eq!(std::fs::read(dir.path().join("report.json")).unwrap(), full);
}
