//! The two-leaf booster against a naive exact-greedy stump booster.

use featgate::booster::{fit, BoostingType, HyperParams};
use featgate::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Stump {
    feature: usize,
    /// Left branch takes values `<= cut`.
    cut: f64,
    left: f64,
    right: f64,
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Exhaustive search over every feature and every gap between consecutive
/// distinct values. Squared loss, so every hessian is one.
fn naive_stump(rows: &[Vec<f64>], grad: &[f64], mcs: usize, lambda: f64) -> Option<Stump> {
    let n = rows.len();
    let g: f64 = grad.iter().sum();
    let h = n as f64;
    let parent = score(g, h, lambda);
    let mut best: Option<(f64, Stump)> = None;
    for j in 0..rows[0].len() {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| rows[a][j].total_cmp(&rows[b][j]));
        let mut gl = 0.0;
        for k in 0..n - 1 {
            gl += grad[idx[k]];
            let (v, next) = (rows[idx[k]][j], rows[idx[k + 1]][j]);
            if v == next {
                continue;
            }
            let nl = k + 1;
            if nl < mcs || n - nl < mcs {
                continue;
            }
            let hl = nl as f64;
            let gain = score(gl, hl, lambda) + score(g - gl, h - hl, lambda) - parent;
            if gain > best.as_ref().map_or(0.0, |b| b.0) {
                best = Some((
                    gain,
                    Stump {
                        feature: j,
                        cut: v,
                        left: -gl / (hl + lambda),
                        right: -(g - gl) / (h - hl + lambda),
                    },
                ));
            }
        }
    }
    best.map(|b| b.1)
}

fn naive_boost(rows: &[Vec<f64>], y: &[f64], hp: &HyperParams) -> Vec<f64> {
    let n = y.len();
    let base = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base; n];
    for _ in 0..hp.n_estimators {
        let grad: Vec<f64> = pred.iter().zip(y).map(|(p, t)| p - t).collect();
        match naive_stump(rows, &grad, hp.min_child_samples, hp.reg_lambda) {
            Some(s) => {
                for (i, r) in rows.iter().enumerate() {
                    pred[i] += hp.learning_rate * if r[s.feature] <= s.cut { s.left } else { s.right };
                }
            }
            None => {
                let leaf = -grad.iter().sum::<f64>() / (n as f64 + hp.reg_lambda);
                pred.iter_mut().for_each(|p| *p += hp.learning_rate * leaf);
            }
        }
    }
    pred
}

fn dataset(seed: u64, n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let y = rows
        .iter()
        .map(|r| r[0].signum() + 0.5 * r[p - 1] * r[p - 1] + 0.2 * rng.random_range(-1.0..1.0))
        .collect();
    (rows, y)
}

#[test]
fn two_leaf_booster_matches_exhaustive_stumps() {
    for seed in 0..8 {
        let (rows, y) = dataset(seed, 150, 3);
        let hp = HyperParams {
            num_leaves: 2,
            n_estimators: 25,
            learning_rate: 0.1,
            min_child_samples: 10,
            reg_lambda: [0.0, 0.5][seed as usize % 2],
            ..Default::default()
        };
        let model = fit(&DenseMatrix::from_rows(&rows), &y, &hp, seed).unwrap();
        let oracle = naive_boost(&rows, &y, &hp);
        for (r, want) in rows.iter().zip(&oracle) {
            let got = model.predict_row(r);
            assert!((got - want).abs() < 1e-10, "seed {seed}: {got} vs {want}");
        }
    }
}

#[test]
fn fit_ignores_row_order() {
    let (rows, y) = dataset(42, 300, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut perm: Vec<usize> = (0..rows.len()).collect();
    for i in (1..perm.len()).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
    let ys: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
    for bt in BoostingType::ALL {
        let hp = HyperParams {
            boosting_type: bt,
            subsample: 0.7,
            colsample_bytree: 0.5,
            n_estimators: 40,
            ..Default::default()
        };
        let a = fit(&DenseMatrix::from_rows(&rows), &y, &hp, 3).unwrap();
        let b = fit(&DenseMatrix::from_rows(&shuffled), &ys, &hp, 3).unwrap();
        assert_eq!(a.to_json(), b.to_json(), "{bt}");
    }
}

#[test]
fn model_json_round_trips() {
    let (rows, y) = dataset(1, 120, 3);
    let x = DenseMatrix::from_rows(&rows);
    let m = fit(&x, &y, &HyperParams::default(), 0).unwrap();
    let back = featgate::booster::BoostedModel::from_json(&m.to_json()).unwrap();
    assert_eq!(m.predict(&x).unwrap(), back.predict(&x).unwrap());
}
