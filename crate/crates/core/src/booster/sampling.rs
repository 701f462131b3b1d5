//! Row and column sampling for the boosting variants.

use super::BoosterError;
use crate::rng::rng_from;
use rand::seq::index;
use rand::Rng;

/// Rows kept by gradient-based one-side sampling, ascending, with the
/// multiplier applied to each row's gradient and hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct GossSample {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Keeps the `ceil(top_rate * n)` rows with the largest `|gradient|` (ties go
/// to the lower index) and a uniform draw of `ceil(other_rate * n)` of the
/// rest, whose weight is `(1 - top_rate) / other_rate`.
pub fn sample_rows_goss(
    gradients: &[f64],
    top_rate: f64,
    other_rate: f64,
    seed: u64,
) -> Result<GossSample, BoosterError> {
    if !(top_rate > 0.0 && other_rate > 0.0 && top_rate + other_rate <= 1.0) {
        return Err(BoosterError::InvalidRates { top_rate, other_rate });
    }
    let n = gradients.len();
    let n_top = ((top_rate * n as f64).ceil() as usize).min(n);
    let n_other = ((other_rate * n as f64).ceil() as usize).min(n - n_top);

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort: equal magnitudes keep index order.
    order.sort_by(|&a, &b| gradients[b].abs().total_cmp(&gradients[a].abs()));
    let (top, rest) = order.split_at(n_top);

    let mut rng = rng_from(seed, &[0x6055]);
    let mut picked: Vec<(usize, f64)> = top.iter().map(|&i| (i, 1.0)).collect();
    let amplify = (1.0 - top_rate) / other_rate;
    for k in index::sample(&mut rng, rest.len(), n_other) {
        picked.push((rest[k], amplify));
    }
    picked.sort_unstable_by_key(|&(i, _)| i);
    let (indices, weights) = picked.into_iter().unzip();
    Ok(GossSample { indices, weights })
}

/// Trees dropped for one DART iteration and the rescaling factors.
#[derive(Debug, Clone, PartialEq)]
pub struct DartDrop {
    pub dropped: Vec<usize>,
    /// Multiplier on the new tree's learning-rate weight, `1 / (k + 1)`.
    pub new_tree_factor: f64,
    /// Multiplier on each dropped tree's weight, `k / (k + 1)`.
    pub dropped_factor: f64,
}

/// Drops each of `trees_so_far` trees independently with probability
/// `drop_rate`. When two or more trees exist and every one was drawn, one of
/// them is reinstated at random.
pub fn dart_drop(trees_so_far: usize, drop_rate: f64, seed: u64) -> DartDrop {
    let drop_rate = drop_rate.clamp(0.0, 1.0);
    let mut rng = rng_from(seed, &[0xDA27]);
    let mut dropped: Vec<usize> = (0..trees_so_far)
        .filter(|_| rng.random::<f64>() < drop_rate)
        .collect();
    if trees_so_far >= 2 && dropped.len() == trees_so_far {
        let keep = rng.random_range(0..trees_so_far);
        dropped.remove(keep);
    }
    let k = dropped.len() as f64;
    DartDrop {
        dropped,
        new_tree_factor: 1.0 / (k + 1.0),
        dropped_factor: k / (k + 1.0),
    }
}

/// `ceil(rate * n)` distinct indices out of `0..n`, ascending.
pub fn sample_without_replacement(n: usize, rate: f64, seed: u64, tag: u64) -> Vec<usize> {
    let k = ((rate * n as f64).ceil() as usize).min(n);
    if k == n {
        return (0..n).collect();
    }
    let mut rng = rng_from(seed, &[tag]);
    let mut v = index::sample(&mut rng, n, k).into_vec();
    v.sort_unstable();
    v
}
