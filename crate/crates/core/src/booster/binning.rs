use serde::{Deserialize, Serialize};

/// Upper bound on bins per feature.
pub const MAX_BINS: usize = 255;

/// Maps raw feature values to bin indices through sorted cut points.
///
/// A value `x` falls in bin `#{c in cuts : c < x}`, so the bins at or left of
/// `b` are exactly the values with `x <= cuts[b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMapper {
    cuts: Vec<f64>,
}

impl BinMapper {
    /// Equal-frequency cut points from a training column. Columns with at
    /// most `max_bins` distinct values get one bin per value.
    pub fn fit(values: &[f64], max_bins: usize) -> Self {
        assert!((2..=256).contains(&max_bins));
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut distinct: Vec<(f64, usize)> = Vec::new();
        for v in sorted {
            match distinct.last_mut() {
                Some((last, count)) if *last == v => *count += 1,
                _ => distinct.push((v, 1)),
            }
        }
        let mut cuts = Vec::new();
        if distinct.len() <= max_bins {
            for w in distinct.windows(2) {
                cuts.push(midpoint(w[0].0, w[1].0));
            }
        } else {
            let n = values.len() as f64;
            let per_bin = n / max_bins as f64;
            let mut cum = 0usize;
            for (i, w) in distinct.windows(2).enumerate() {
                cum += distinct[i].1;
                if cum as f64 >= per_bin * (cuts.len() + 1) as f64 {
                    cuts.push(midpoint(w[0].0, w[1].0));
                    if cuts.len() == max_bins - 1 {
                        break;
                    }
                }
            }
        }
        Self { cuts }
    }

    pub fn n_bins(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn bin(&self, x: f64) -> u8 {
        self.cuts.partition_point(|&c| c < x) as u8
    }

    /// Raw-value threshold equivalent to "bin <= b".
    pub fn threshold(&self, b: usize) -> f64 {
        self.cuts[b]
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}
