use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Row-major dense matrix of `f64` with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    column_names: Vec<String>,
}

impl DenseMatrix {
    /// Panics if `values.len() != n_rows * column_names.len()`.
    pub fn new(n_rows: usize, column_names: Vec<String>, values: Vec<f64>) -> Self {
        let n_cols = column_names.len();
        assert_eq!(
            values.len(),
            n_rows * n_cols,
            "matrix buffer does not match {n_rows}x{n_cols}"
        );
        Self {
            n_rows,
            n_cols,
            values,
            column_names,
        }
    }

    /// Builds a matrix from row slices, naming columns `f0, f1, ...`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), n_cols, "ragged rows");
            values.extend_from_slice(r);
        }
        let names = (0..n_cols).map(|j| format!("f{j}")).collect();
        Self::new(rows.len(), names, values)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n_cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, col: &[f64]) {
        assert_eq!(col.len(), self.n_rows);
        for (i, &v) in col.iter().enumerate() {
            self.set(i, j, v);
        }
    }

    pub fn select_rows(&self, rows: Range<usize>) -> DenseMatrix {
        let values = self.values[rows.start * self.n_cols..rows.end * self.n_cols].to_vec();
        DenseMatrix::new(rows.len(), self.column_names.clone(), values)
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.n_cols);
        self.column_names = names;
        self
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
