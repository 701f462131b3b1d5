//! Accuracy metrics, permutation feature importance and two-sample statistics.

use crate::booster::{BoostedModel, BoosterError};
use crate::matrix::DenseMatrix;
use crate::rng::rng_from;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub const DEFAULT_PFI_REPEATS: usize = 10;
pub const DEFAULT_HISTOGRAM_BINS: usize = 10;
/// Largest pooled sample size for which [`mann_whitney_u`] enumerates the
/// exact null distribution.
pub const EXACT_MWU_MAX_TOTAL: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} truths vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("non-finite input")]
    NonFinite,
    #[error("truth is constant, R² undefined")]
    ConstantTruth,
    #[error("empty sample")]
    EmptySample,
    #[error("need at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("at least one permutation repeat is required")]
    NoRepeats,
    #[error(transparent)]
    Model(#[from] BoosterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub r2: f64,
    pub mae: f64,
    pub rmse: f64,
}

/// MAE and RMSE, which stay defined when the truth is constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSet {
    pub mae: f64,
    pub rmse: f64,
    pub sse: f64,
}

pub fn compute_errors(y_true: &[f64], y_pred: &[f64]) -> Result<ErrorSet, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    if !y_true.iter().chain(y_pred).all(|v| v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let n = y_true.len() as f64;
    let (abs, sq) = y_true.iter().zip(y_pred).fold((0.0, 0.0), |(a, s), (t, p)| {
        let e = t - p;
        (a + e.abs(), s + e * e)
    });
    Ok(ErrorSet {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        sse: sq,
    })
}

pub fn compute_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<MetricSet, MetricsError> {
    let e = compute_errors(y_true, y_pred)?;
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let sst: f64 = y_true.iter().map(|t| (t - mean) * (t - mean)).sum();
    if sst == 0.0 {
        return Err(MetricsError::ConstantTruth);
    }
    Ok(MetricSet {
        r2: 1.0 - e.sse / sst,
        mae: e.mae,
        rmse: e.rmse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfiEntry {
    pub feature: String,
    pub column: usize,
    /// Mean R² drop over repeats.
    pub r2_drop: f64,
    pub repeats: usize,
    /// Drop for each repeat, in repeat order.
    pub drops: Vec<f64>,
}

/// The row permutation used for column `column`, repeat `repeat`.
pub fn pfi_permutation(n: usize, seed: u64, column: usize, repeat: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from(seed, &[column as u64, repeat as u64]));
    idx
}

/// Permutation importance with permutations from [`pfi_permutation`].
pub fn permutation_importance(
    model: &BoostedModel,
    x: &DenseMatrix,
    y: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<Vec<PfiEntry>, MetricsError> {
    permutation_importance_with(model, x, y, repeats, |n, j, r| pfi_permutation(n, seed, j, r))
}

/// Permutation importance with caller-supplied permutations. Entries are
/// sorted by mean drop, descending; equal drops keep column order.
pub fn permutation_importance_with<F>(
    model: &BoostedModel,
    x: &DenseMatrix,
    y: &[f64],
    repeats: usize,
    permutation: F,
) -> Result<Vec<PfiEntry>, MetricsError>
where
    F: Fn(usize, usize, usize) -> Vec<usize>,
{
    if repeats == 0 {
        return Err(MetricsError::NoRepeats);
    }
    if x.n_rows() == 0 {
        return Err(MetricsError::Empty);
    }
    let baseline = compute_metrics(y, &model.predict(x)?)?.r2;
    let mut work = x.clone();
    let mut out = Vec::with_capacity(x.n_cols());
    for j in 0..x.n_cols() {
        let original = x.column(j);
        let mut drops = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let perm = permutation(x.n_rows(), j, r);
            let shuffled: Vec<f64> = perm.iter().map(|&i| original[i]).collect();
            work.set_column(j, &shuffled);
            let r2 = compute_metrics(y, &model.predict(&work)?)?.r2;
            drops.push(baseline - r2);
        }
        work.set_column(j, &original);
        out.push(PfiEntry {
            feature: x.column_names()[j].clone(),
            column: j,
            r2_drop: drops.iter().sum::<f64>() / repeats as f64,
            repeats,
            drops,
        });
    }
    out.sort_by(|a, b| b.r2_drop.total_cmp(&a.r2_drop));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    /// U for the first sample: pairs `(a_i, b_j)` with `a_i > b_j`, ties counting one half.
    pub u_statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled sample.
fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

fn tie_sizes(pooled: &[f64]) -> Vec<usize> {
    let mut s = pooled.to_vec();
    s.sort_by(f64::total_cmp);
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < s.len() {
        let j = s[i..].iter().take_while(|&&v| v == s[i]).count();
        sizes.push(j);
        i += j;
    }
    sizes
}

fn u_from_ranks(ranks: &[f64], n1: usize) -> f64 {
    let r1: f64 = ranks[..n1].iter().sum();
    r1 - (n1 * (n1 + 1)) as f64 / 2.0
}

fn check_samples(a: &[f64], b: &[f64]) -> Result<(), MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    if !a.iter().chain(b).all(|v| v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    Ok(())
}

/// Two-sided Mann–Whitney U test. Uses the exact permutation distribution
/// of the midrank statistic when `n1 + n2 <= EXACT_MWU_MAX_TOTAL`, and the
/// tie-corrected normal approximation with continuity correction otherwise.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<UTestResult, MetricsError> {
    if a.len() + b.len() <= EXACT_MWU_MAX_TOTAL {
        mann_whitney_u_exact(a, b)
    } else {
        mann_whitney_u_normal(a, b)
    }
}

/// Normal approximation: `z = (|U - n1 n2 / 2| - 0.5) / sigma` with
/// `sigma^2 = n1 n2 / 12 * ((n + 1) - sum(t^3 - t) / (n (n - 1)))`.
pub fn mann_whitney_u_normal(a: &[f64], b: &[f64]) -> Result<UTestResult, MetricsError> {
    check_samples(a, b)?;
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let u = u_from_ranks(&midranks(&pooled), n1);
    let n = (n1 + n2) as f64;
    let ties: f64 = tie_sizes(&pooled)
        .into_iter()
        .map(|t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let var = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    let mu = (n1 * n2) as f64 / 2.0;
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * normal.sf(z)).min(1.0)
    };
    Ok(UTestResult {
        u_statistic: u,
        p_value,
        n1,
        n2,
        exact: false,
    })
}

/// Exact two-sided test: enumerates every assignment of the pooled midranks
/// to the first sample and counts statistics at least as far from the mean.
pub fn mann_whitney_u_exact(a: &[f64], b: &[f64]) -> Result<UTestResult, MetricsError> {
    check_samples(a, b)?;
    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    assert!(n <= 24, "exact enumeration is limited to small samples");
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    // Work in doubled ranks so every statistic is an integer.
    let doubled: Vec<i64> = ranks.iter().map(|r| (r * 2.0).round() as i64).collect();
    let offset = (n1 * (n1 + 1)) as i64;
    let u2_obs = doubled[..n1].iter().sum::<i64>() - offset;
    let mu2 = (n1 * n2) as i64;
    let dev_obs = (u2_obs - mu2).abs();

    let (mut extreme, mut total) = (0u64, 0u64);
    let mut chosen = Vec::with_capacity(n1);
    fn walk(start: usize, chosen: &mut Vec<usize>, k: usize, doubled: &[i64], visit: &mut dyn FnMut(i64)) {
        if chosen.len() == k {
            visit(chosen.iter().map(|&i| doubled[i]).sum());
            return;
        }
        let need = k - chosen.len();
        for i in start..=doubled.len() - need {
            chosen.push(i);
            walk(i + 1, chosen, k, doubled, visit);
            chosen.pop();
        }
    }
    walk(0, &mut chosen, n1, &doubled, &mut |sum| {
        total += 1;
        if (sum - offset - mu2).abs() >= dev_obs {
            extreme += 1;
        }
    });
    Ok(UTestResult {
        u_statistic: u2_obs as f64 / 2.0,
        p_value: extreme as f64 / total as f64,
        n1,
        n2,
        exact: true,
    })
}

/// Range `[lo, hi]` covered by shared equal-width bins for both samples.
pub fn shared_bin_range(a: &[f64], b: &[f64]) -> (f64, f64) {
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Counts per bin over `bins` equal-width bins on `[lo, hi]`; the top edge
/// belongs to the last bin. A zero-width range puts everything in bin 0.
pub fn histogram_counts(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let width = hi - lo;
    for &v in values {
        let b = if width > 0.0 {
            (((v - lo) / width * bins as f64).floor() as usize).min(bins - 1)
        } else {
            0
        };
        counts[b] += 1;
    }
    counts
}

/// Sum over shared bins of the smaller of the two samples' bin proportions.
pub fn histogram_overlap(a: &[f64], b: &[f64], bins: usize) -> Result<f64, MetricsError> {
    check_samples(a, b)?;
    if bins < 2 {
        return Err(MetricsError::TooFewBins(bins));
    }
    let (lo, hi) = shared_bin_range(a, b);
    let ca = histogram_counts(a, lo, hi, bins);
    let cb = histogram_counts(b, lo, hi, bins);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    Ok(ca
        .iter()
        .zip(&cb)
        .map(|(&x, &y)| (x as f64 / na).min(y as f64 / nb))
        .sum())
}
