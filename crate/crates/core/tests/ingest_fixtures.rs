//! Ingestion of the bundled synthetic price and indicator fixtures, checked
//! against an independent re-parse of the raw files.

use chrono::{Datelike, NaiveDate};
use featgate::experiment::config::{ingest_files, DataConfig};
use featgate::experiment::ExperimentError;
use featgate::ingest::{AlignedDataset, IngestError, PoolTag, BASELINE_SERIES, DEFAULT_INDICATORS};
use std::collections::HashMap;
use std::path::PathBuf;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn augmented() -> AlignedDataset {
    ingest_files(
        &DataConfig::default(),
        &fixture("btc_prices_synthetic.csv"),
        Some(&fixture("owid_covid_synthetic.csv")),
    )
    .unwrap()
}

/// Raw indicator cells for one location, keyed by date.
fn raw_indicators(location: &str) -> (Vec<String>, Vec<(NaiveDate, Vec<Option<f64>>)>) {
    let mut r = csv::Reader::from_path(fixture("owid_covid_synthetic.csv")).unwrap();
    let headers: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.unwrap();
        if &rec[2] != location {
            continue;
        }
        let date = NaiveDate::parse_from_str(&rec[3], "%Y-%m-%d").unwrap();
        let vals = (4..rec.len())
            .map(|i| {
                if rec[i].is_empty() {
                    None
                } else {
                    Some(rec[i].parse().unwrap())
                }
            })
            .collect();
        rows.push((date, vals));
    }
    (headers[4..].to_vec(), rows)
}

#[test]
fn fixture_aligns_to_550_rows() {
    let d = augmented();
    assert_eq!(d.len(), 550);
    assert_eq!(d.horizon(), 7);
    assert_eq!(d.pool_tag(), PoolTag::Augmented);
    assert_eq!(d.dates()[0], NaiveDate::from_ymd_opt(2020, 12, 12).unwrap());
    assert_eq!(
        *d.dates().last().unwrap(),
        NaiveDate::from_ymd_opt(2022, 6, 14).unwrap()
    );
    let names: Vec<&str> = d.series_names().collect();
    assert_eq!(&names[..3], &BASELINE_SERIES);
    assert_eq!(&names[3..], &DEFAULT_INDICATORS);
}

#[test]
fn returns_calendar_and_target_match_raw_prices() {
    let d = augmented();
    let mut r = csv::Reader::from_path(fixture("btc_prices_synthetic.csv")).unwrap();
    let close: HashMap<NaiveDate, f64> = r
        .records()
        .map(|rec| {
            let rec = rec.unwrap();
            (
                NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").unwrap(),
                rec[4].parse().unwrap(),
            )
        })
        .collect();
    let ret = |day: NaiveDate| (close[&day] / close[&day.pred_opt().unwrap()]).ln();
    let returns = d.series("Returns").unwrap();
    let dow = d.series("DayOfWeek_cos").unwrap();
    let doy = d.series("DOY_cos").unwrap();
    for (t, &day) in d.dates().iter().enumerate() {
        assert!((returns[t] - ret(day)).abs() < 1e-15);
        let ahead = day + chrono::Days::new(7);
        assert!((d.target()[t] - ret(ahead)).abs() < 1e-15);
        let wd = day.weekday().num_days_from_monday() as f64;
        assert!((dow[t] - (std::f64::consts::TAU * wd / 7.0).cos()).abs() < 1e-15);
        let yd = (day.ordinal() - 1) as f64;
        assert!((doy[t] - (std::f64::consts::TAU * yd / 365.25).cos()).abs() < 1e-15);
    }
}

#[test]
fn indicator_gaps_are_forward_filled_then_zeroed() {
    let d = augmented();
    let (names, raw) = raw_indicators("United States");
    for (k, name) in names.iter().enumerate() {
        let mut last = None;
        let mut expected = HashMap::new();
        for (day, vals) in &raw {
            if vals[k].is_some() {
                last = vals[k];
            }
            expected.insert(*day, last.unwrap_or(0.0));
        }
        let got = d.series(name).unwrap();
        for (t, day) in d.dates().iter().enumerate() {
            assert_eq!(got[t], expected[day], "{name} on {day}");
        }
    }
    // Vaccinations are missing for the first 20 calendar days.
    let v = d.series("total_vaccinations").unwrap();
    assert!(v[..19].iter().all(|&x| x == 0.0));
    assert!(v[19] > 0.0);
    // Weekly series only report on Sundays and are carried through the week.
    let w = d.series("weekly_hosp_admissions").unwrap();
    for t in 1..d.len() {
        if d.dates()[t].weekday() != chrono::Weekday::Sun {
            assert_eq!(w[t], w[t - 1]);
        }
    }
}

#[test]
fn location_filter_selects_rows() {
    let mut cfg = DataConfig::default();
    cfg.location = Some("Germany".into());
    let de = ingest_files(
        &cfg,
        &fixture("btc_prices_synthetic.csv"),
        Some(&fixture("owid_covid_synthetic.csv")),
    )
    .unwrap();
    let us = augmented();
    assert_eq!(de.len(), us.len());
    assert_ne!(de.series("new_cases"), us.series("new_cases"));

    // Without the filter every location's rows share the same dates.
    cfg.location_column = Some(String::new());
    let err = ingest_files(
        &cfg,
        &fixture("btc_prices_synthetic.csv"),
        Some(&fixture("owid_covid_synthetic.csv")),
    )
    .unwrap_err();
    assert!(matches!(
        err,
        ExperimentError::Ingest(IngestError::DuplicateDate(_))
    ));
    cfg.location_column = Some("location".into());

    // World never reports hospital columns.
    cfg.location = Some("World".into());
    let err = ingest_files(
        &cfg,
        &fixture("btc_prices_synthetic.csv"),
        Some(&fixture("owid_covid_synthetic.csv")),
    )
    .unwrap_err();
    assert!(
        matches!(err, ExperimentError::Ingest(IngestError::AllGapColumn(ref c)) if c.contains("icu") || c.contains("hosp"))
    );
}

#[test]
fn baseline_only_ingest_and_csv_round_trip() {
    let d = ingest_files(&DataConfig::default(), &fixture("btc_prices_synthetic.csv"), None).unwrap();
    assert_eq!(d.len(), 550);
    assert_eq!(d.pool_tag(), PoolTag::Baseline);
    assert_eq!(d.series_names().count(), 3);

    let dir = tempfile::tempdir().unwrap();
    for data in [d, augmented()] {
        let path = dir.path().join("aligned.csv");
        data.write_csv(&path).unwrap();
        assert_eq!(AlignedDataset::read_csv(&path).unwrap(), data);
    }
}

#[test]
fn missing_columns_are_data_errors() {
    let mut cfg = DataConfig::default();
    cfg.indicators = vec!["not_a_column".into()];
    let err = ingest_files(
        &cfg,
        &fixture("btc_prices_synthetic.csv"),
        Some(&fixture("owid_covid_synthetic.csv")),
    )
    .unwrap_err();
    assert!(matches!(
        err,
        ExperimentError::Ingest(IngestError::MissingColumn(_))
    ));
    assert_eq!(err.exit_code(), 3);
    let err = ingest_files(&DataConfig::default(), &fixture("nope.csv"), None).unwrap_err();
    assert_eq!(err.exit_code(), 4);
}
