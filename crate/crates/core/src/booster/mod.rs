//! Histogram-based gradient-boosted regression trees.
//!
//! Squared-error loss, leaf-wise growth, 255 equal-frequency bins per
//! feature, L1/L2-regularized leaf values and three boosting variants:
//!
//! * `gbdt`: plain boosting with optional per-iteration bagging.
//! * `dart`: each iteration drops a random subset of earlier trees while
//!   fitting, then rescales the dropped trees and the new tree.
//! * `goss`: gradient-based one-side sampling replaces bagging.
//!
//! Training rows are put into a canonical order before anything else, so the
//! fitted model does not depend on the order rows are supplied in.

mod binning;
mod sampling;
mod tree;

pub use binning::{BinMapper, MAX_BINS};
pub use sampling::{dart_drop, sample_rows_goss, sample_without_replacement, DartDrop, GossSample};
pub use tree::{Node, Tree};

use crate::matrix::DenseMatrix;
use crate::rng::derive_seed;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;
use tree::{grow_tree, BinnedData, GrowParams};

pub const DART_DROP_RATE: f64 = 0.1;
pub const GOSS_TOP_RATE: f64 = 0.2;
pub const GOSS_OTHER_RATE: f64 = 0.1;
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum BoosterError {
    #[error("{rows} training rows, need at least {needed}")]
    TooFewRows { rows: usize, needed: usize },
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    #[error("empty target")]
    DegenerateTarget,
    #[error("shape mismatch: expected {expected} columns/rows, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid GOSS rates top={top_rate}, other={other_rate}")]
    InvalidRates { top_rate: f64, other_rate: f64 },
    #[error("invalid hyperparameter {name} = {value}")]
    InvalidParam { name: &'static str, value: String },
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoostingType {
    Gbdt,
    Dart,
    Goss,
}

impl BoostingType {
    pub const ALL: [BoostingType; 3] = [BoostingType::Gbdt, BoostingType::Dart, BoostingType::Goss];

    pub fn as_str(self) -> &'static str {
        match self {
            BoostingType::Gbdt => "gbdt",
            BoostingType::Dart => "dart",
            BoostingType::Goss => "goss",
        }
    }
}

impl fmt::Display for BoostingType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoostingType {
    type Err = BoosterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BoostingType::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| BoosterError::InvalidParam {
                name: "boosting_type",
                value: s.to_string(),
            })
    }
}

/// Search ranges for the genetic optimizer. Inclusive on both ends.
pub mod ranges {
    pub const NUM_LEAVES: (usize, usize) = (1, 100);
    pub const MAX_DEPTH: [i32; 5] = [-1, 5, 10, 15, 20];
    pub const LEARNING_RATE: (f64, f64) = (0.001, 0.1);
    pub const N_ESTIMATORS: (usize, usize) = (3, 200);
    pub const SUBSAMPLE: (f64, f64) = (0.5, 1.0);
    pub const COLSAMPLE_BYTREE: (f64, f64) = (0.5, 1.0);
    pub const MIN_CHILD_SAMPLES: (usize, usize) = (10, 50);
    pub const REG_ALPHA: (f64, f64) = (0.0, 1.0);
    pub const REG_LAMBDA: (f64, f64) = (0.0, 1.0);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub boosting_type: BoostingType,
    pub num_leaves: usize,
    /// `-1` means unlimited.
    pub max_depth: i32,
    pub learning_rate: f64,
    pub n_estimators: usize,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub min_child_samples: usize,
    pub reg_alpha: f64,
    pub reg_lambda: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            boosting_type: BoostingType::Gbdt,
            num_leaves: 31,
            max_depth: -1,
            learning_rate: 0.1,
            n_estimators: 100,
            subsample: 1.0,
            colsample_bytree: 1.0,
            min_child_samples: 20,
            reg_alpha: 0.0,
            reg_lambda: 0.0,
        }
    }
}

impl HyperParams {
    /// Checks the values the learner can run with at all.
    pub fn validate(&self) -> Result<(), BoosterError> {
        let bad = |name: &'static str, value: String| Err(BoosterError::InvalidParam { name, value });
        if self.num_leaves == 0 {
            return bad("num_leaves", "0".into());
        }
        if self.max_depth == 0 || self.max_depth < -1 {
            return bad("max_depth", self.max_depth.to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", self.learning_rate.to_string());
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample", self.subsample.to_string());
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return bad("colsample_bytree", self.colsample_bytree.to_string());
        }
        if self.min_child_samples == 0 {
            return bad("min_child_samples", "0".into());
        }
        if !(self.reg_alpha >= 0.0 && self.reg_alpha.is_finite()) {
            return bad("reg_alpha", self.reg_alpha.to_string());
        }
        if !(self.reg_lambda >= 0.0 && self.reg_lambda.is_finite()) {
            return bad("reg_lambda", self.reg_lambda.to_string());
        }
        Ok(())
    }

    /// True when every field lies inside the optimizer's search ranges.
    pub fn in_search_space(&self) -> bool {
        use ranges::*;
        let within = |v: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&v);
        let within_u = |v: usize, (lo, hi): (usize, usize)| (lo..=hi).contains(&v);
        within_u(self.num_leaves, NUM_LEAVES)
            && MAX_DEPTH.contains(&self.max_depth)
            && within(self.learning_rate, LEARNING_RATE)
            && within_u(self.n_estimators, N_ESTIMATORS)
            && within(self.subsample, SUBSAMPLE)
            && within(self.colsample_bytree, COLSAMPLE_BYTREE)
            && within_u(self.min_child_samples, MIN_CHILD_SAMPLES)
            && within(self.reg_alpha, REG_ALPHA)
            && within(self.reg_lambda, REG_LAMBDA)
    }

    pub fn min_rows(&self) -> usize {
        (2 * self.min_child_samples).max(20)
    }

    fn grow_params(&self) -> GrowParams {
        GrowParams {
            num_leaves: self.num_leaves,
            max_depth: self.max_depth,
            min_child_samples: self.min_child_samples,
            reg_alpha: self.reg_alpha,
            reg_lambda: self.reg_lambda,
        }
    }
}

/// A fitted ensemble. Predictions are `base_score + sum_i tree_weights[i] * trees[i](x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub format_version: u32,
    pub base_score: f64,
    pub params: HyperParams,
    pub feature_names: Vec<String>,
    pub tree_weights: Vec<f64>,
    pub trees: Vec<Tree>,
}

impl BoostedModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees
            .iter()
            .zip(&self.tree_weights)
            .fold(self.base_score, |acc, (t, w)| acc + w * t.predict_row(x))
    }

    pub fn predict(&self, x: &DenseMatrix) -> Result<Vec<f64>, BoosterError> {
        if x.n_cols() != self.n_features() {
            return Err(BoosterError::ShapeMismatch {
                expected: self.n_features(),
                got: x.n_cols(),
            });
        }
        Ok((0..x.n_rows()).map(|i| self.predict_row(x.row(i))).collect())
    }

    /// Indices of features used by at least one split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut used: Vec<usize> = self.trees.iter().flat_map(Tree::split_features).collect();
        used.sort_unstable();
        used.dedup();
        used
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, BoosterError> {
        let m: BoostedModel = serde_json::from_str(s).map_err(|e| BoosterError::Json(e.to_string()))?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(BoosterError::UnsupportedVersion(m.format_version));
        }
        Ok(m)
    }
}

pub fn predict(m: &BoostedModel, x: &DenseMatrix) -> Result<Vec<f64>, BoosterError> {
    m.predict(x)
}

/// Per-iteration training trace, used by tests and diagnostics.
#[derive(Debug, Clone, Default)]
pub struct FitTrace {
    /// Training mean squared error after each iteration.
    pub train_mse: Vec<f64>,
}

pub fn fit(x: &DenseMatrix, y: &[f64], hp: &HyperParams, seed: u64) -> Result<BoostedModel, BoosterError> {
    fit_traced(x, y, hp, seed).map(|(m, _)| m)
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

pub fn fit_traced(
    x: &DenseMatrix,
    y: &[f64],
    hp: &HyperParams,
    seed: u64,
) -> Result<(BoostedModel, FitTrace), BoosterError> {
    if y.is_empty() {
        return Err(BoosterError::DegenerateTarget);
    }
    if x.n_rows() != y.len() {
        return Err(BoosterError::ShapeMismatch {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    hp.validate()?;
    let n = y.len();
    if n < hp.min_rows() {
        return Err(BoosterError::TooFewRows {
            rows: n,
            needed: hp.min_rows(),
        });
    }
    if !x.all_finite() {
        return Err(BoosterError::NonFiniteInput("features"));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(BoosterError::NonFiniteInput("target"));
    }

    // Canonical row order: lexicographic on (features, target).
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lexicographic(x.row(a), x.row(b)).then(y[a].total_cmp(&y[b])));
    let p = x.n_cols();
    let rows: Vec<&[f64]> = order.iter().map(|&i| x.row(i)).collect();
    let target: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let columns: Vec<Vec<f64>> = (0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let data = BinnedData::new(&columns, MAX_BINS);

    let base_score = target.iter().sum::<f64>() / n as f64;
    let grow = hp.grow_params();
    let mut pred = vec![base_score; n];
    let mut trees: Vec<Tree> = Vec::with_capacity(hp.n_estimators);
    let mut weights: Vec<f64> = Vec::with_capacity(hp.n_estimators);
    // Raw per-row outputs of every tree; only DART needs them.
    let mut outputs: Vec<Vec<f64>> = Vec::new();
    let mut trace = FitTrace::default();
    let mut grad = vec![0.0; n];
    let hess_ones = vec![1.0; n];
    let mut hess_weighted = vec![1.0; n];

    for iter in 0..hp.n_estimators {
        let iter_seed = derive_seed(seed, &[iter as u64]);

        let drop = match hp.boosting_type {
            BoostingType::Dart => dart_drop(trees.len(), DART_DROP_RATE, iter_seed),
            _ => DartDrop {
                dropped: Vec::new(),
                new_tree_factor: 1.0,
                dropped_factor: 0.0,
            },
        };
        for &j in &drop.dropped {
            for (pi, o) in pred.iter_mut().zip(&outputs[j]) {
                *pi -= weights[j] * o;
            }
        }

        for i in 0..n {
            grad[i] = pred[i] - target[i];
        }

        let (sample_rows, hess): (Vec<u32>, &[f64]) = match hp.boosting_type {
            BoostingType::Goss => {
                let s = sample_rows_goss(&grad, GOSS_TOP_RATE, GOSS_OTHER_RATE, iter_seed)?;
                hess_weighted.iter_mut().for_each(|h| *h = 1.0);
                for (&i, &w) in s.indices.iter().zip(&s.weights) {
                    grad[i] *= w;
                    hess_weighted[i] = w;
                }
                (s.indices.iter().map(|&i| i as u32).collect(), &hess_weighted)
            }
            _ => {
                let r = sample_without_replacement(n, hp.subsample, iter_seed, 0xBA6);
                (r.into_iter().map(|i| i as u32).collect(), &hess_ones)
            }
        };
        let features = sample_without_replacement(p, hp.colsample_bytree, iter_seed, 0xC015);

        let tree = grow_tree(&data, sample_rows, &grad, hess, &features, &grow);
        let out: Vec<f64> = rows.iter().map(|r| tree.predict_row(r)).collect();
        let w = hp.learning_rate * drop.new_tree_factor;

        for &j in &drop.dropped {
            weights[j] *= drop.dropped_factor;
            for (pi, o) in pred.iter_mut().zip(&outputs[j]) {
                *pi += weights[j] * o;
            }
        }
        for (pi, o) in pred.iter_mut().zip(&out) {
            *pi += w * o;
        }
        trees.push(tree);
        weights.push(w);
        if hp.boosting_type == BoostingType::Dart {
            outputs.push(out);
        }
        let mse = pred
            .iter()
            .zip(&target)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n as f64;
        trace.train_mse.push(mse);
    }

    let names = x.column_names().to_vec();
    Ok((
        BoostedModel {
            format_version: MODEL_FORMAT_VERSION,
            base_score,
            params: *hp,
            feature_names: names,
            tree_weights: weights,
            trees,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(n: usize, p: usize, seed: u64) -> (DenseMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y = rows
            .iter()
            .map(|r| r[0].sin() + 0.5 * r[p - 1] * r[0] + rng.random_range(-0.1..0.1))
            .collect();
        (DenseMatrix::from_rows(&rows), y)
    }

    #[test]
    fn constant_target_predicts_constant() {
        let (x, _) = random_data(60, 3, 1);
        let y = vec![5.0; 60];
        for bt in BoostingType::ALL {
            let hp = HyperParams {
                boosting_type: bt,
                ..Default::default()
            };
            let m = fit(&x, &y, &hp, 3).unwrap();
            assert!(m.predict(&x).unwrap().iter().all(|&v| v == 5.0), "{bt}");
        }
    }

    #[test]
    fn single_leaf_trees_are_input_independent() {
        let (x, y) = random_data(80, 4, 2);
        let hp = HyperParams {
            num_leaves: 1,
            n_estimators: 20,
            ..Default::default()
        };
        let m = fit(&x, &y, &hp, 0).unwrap();
        let p = m.predict(&x).unwrap();
        assert!(p.iter().all(|&v| v == p[0]));
        assert!(m.trees.iter().all(|t| t.leaf_count() == 1));
        // Each step moves a fraction `learning_rate` toward the mean residual.
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((p[0] - mean).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let (x, y) = random_data(30, 2, 3);
        assert_eq!(
            fit(&x, &[], &HyperParams::default(), 0),
            Err(BoosterError::DegenerateTarget)
        );
        assert_eq!(
            fit(&x, &y, &HyperParams::default(), 0),
            Err(BoosterError::TooFewRows { rows: 30, needed: 40 })
        );
        let mut yy = y.clone();
        yy[3] = f64::NAN;
        let hp = HyperParams {
            min_child_samples: 5,
            ..Default::default()
        };
        assert_eq!(fit(&x, &yy, &hp, 0), Err(BoosterError::NonFiniteInput("target")));
        let m = fit(&x, &y, &hp, 0).unwrap();
        let wrong = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0]]);
        assert!(matches!(
            m.predict(&wrong),
            Err(BoosterError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn zero_tree_model_predicts_base_score() {
        let (x, y) = random_data(40, 2, 4);
        let hp = HyperParams {
            n_estimators: 0,
            ..Default::default()
        };
        let m = fit(&x, &y, &hp, 0).unwrap();
        let mean = y.iter().sum::<f64>() / 40.0;
        for v in m.predict(&x).unwrap() {
            assert!((v - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn structural_limits_hold_for_every_variant() {
        let (x, y) = random_data(300, 5, 5);
        for bt in BoostingType::ALL {
            let hp = HyperParams {
                boosting_type: bt,
                num_leaves: 12,
                max_depth: 5,
                min_child_samples: 15,
                subsample: 0.7,
                colsample_bytree: 0.6,
                n_estimators: 30,
                ..Default::default()
            };
            let m = fit(&x, &y, &hp, 9).unwrap();
            for t in &m.trees {
                assert!(t.leaf_count() <= 12);
                assert!(t.depth() <= 5);
                for node in &t.nodes {
                    if let Node::Split { left, right, .. } = node {
                        for c in [left, right] {
                            let s = match &t.nodes[*c] {
                                Node::Leaf { samples, .. } | Node::Split { samples, .. } => *samples,
                            };
                            assert!(s >= 15, "{bt}: child with {s} samples");
                        }
                    }
                }
            }
            if bt != BoostingType::Dart {
                assert!(m.tree_weights.iter().all(|&w| w == hp.learning_rate));
            }
        }
    }

    #[test]
    fn dart_weights_are_rescaled() {
        let (x, y) = random_data(200, 3, 6);
        let hp = HyperParams {
            boosting_type: BoostingType::Dart,
            n_estimators: 40,
            ..Default::default()
        };
        let m = fit(&x, &y, &hp, 1).unwrap();
        assert!(m.tree_weights.iter().any(|&w| w < hp.learning_rate));
        assert!(m.tree_weights.iter().all(|&w| w > 0.0 && w <= hp.learning_rate));
    }

    #[test]
    fn model_json_round_trip() {
        let (x, y) = random_data(100, 3, 7);
        let m = fit(&x, &y, &HyperParams::default(), 2).unwrap();
        let back = BoostedModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        v["format_version"] = 99.into();
        assert_eq!(
            BoostedModel::from_json(&v.to_string()),
            Err(BoosterError::UnsupportedVersion(99))
        );
    }

    #[test]
    fn large_lambda_shrinks_leaves_monotonically() {
        let (x, y) = random_data(120, 3, 8);
        let mut prev = f64::INFINITY;
        for lambda in [0.0, 1.0, 10.0, 100.0, 1e4, 1e8] {
            let hp = HyperParams {
                reg_lambda: lambda,
                n_estimators: 1,
                num_leaves: 8,
                ..Default::default()
            };
            let m = fit(&x, &y, &hp, 0).unwrap();
            let largest = m.trees[0].max_abs_leaf();
            assert!(largest <= prev + 1e-15, "lambda {lambda}: {largest} > {prev}");
            prev = largest;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn param_validation() {
        assert!(HyperParams::default().validate().is_ok());
        assert!(HyperParams {
            max_depth: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(HyperParams {
            subsample: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(!HyperParams {
            max_depth: 7,
            ..Default::default()
        }
        .in_search_space());
        assert_eq!("dart".parse::<BoostingType>().unwrap(), BoostingType::Dart);
    }
}
