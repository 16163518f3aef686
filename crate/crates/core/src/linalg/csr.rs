use rayon::prelude::*;

use super::LinearOperator;

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from per-row `(column, value)` lists. Duplicates are summed.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                assert!(c < ncols, "column {c} out of range {ncols}");
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            rows[r].push((c, v));
        }
        Self::from_rows(ncols, rows)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let rows = diag.iter().enumerate().map(|(i, &v)| vec![(i, v)]).collect();
        Self::from_rows(diag.len(), rows)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        let rows = rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(c, &v)| (c, v))
                    .collect()
            })
            .collect();
        Self::from_rows(ncols, rows)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.apply(x, &mut y);
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        super::dot(x, &ay)
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// `a·A + b·B` over the union of both sparsity patterns.
    pub fn linear_combination(a: f64, lhs: &CsrMatrix, b: f64, rhs: &CsrMatrix) -> CsrMatrix {
        assert_eq!(lhs.nrows, rhs.nrows);
        assert_eq!(lhs.ncols, rhs.ncols);
        let rows = (0..lhs.nrows)
            .map(|i| {
                let (lc, lv) = lhs.row(i);
                let (rc, rv) = rhs.row(i);
                let mut row: Vec<(usize, f64)> = lc.iter().zip(lv).map(|(&c, &v)| (c, a * v)).collect();
                row.extend(rc.iter().zip(rv).map(|(&c, &v)| (c, b * v)));
                row
            })
            .collect();
        CsrMatrix::from_rows(lhs.ncols, rows)
    }

    /// Largest `|a_ij − a_ji|` relative to the largest entry magnitude.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0_f64;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in dense.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        dense
    }

    /// Index of the leftmost stored column in each row, or the row index for empty rows.
    pub(crate) fn first_columns(&self) -> Vec<usize> {
        (0..self.nrows)
            .map(|i| self.row(i).0.first().map_or(i, |&c| c.min(i)))
            .collect()
    }
}

impl LinearOperator for CsrMatrix {
    fn size(&self) -> usize {
        self.nrows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        y.par_iter_mut().enumerate().with_min_len(256).for_each(|(i, yi)| {
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.col_idx[span.clone()]
                .iter()
                .zip(&self.values[span])
                .map(|(&c, &v)| v * x[c])
                .sum();
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_sorted() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 3.0), (1, 1, -1.0)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 2), 4.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![6.0, -1.0]);
    }

    #[test]
    fn linear_combination_merges_patterns() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 2.0]]);
        let b = CsrMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let c = CsrMatrix::linear_combination(2.0, &a, 0.5, &b);
        assert_eq!(c.to_dense(), vec![vec![2.0, 0.5], vec![0.5, 4.0]]);
        assert_eq!(c.symmetry_defect(), 0.0);
    }

    #[test]
    fn symmetry_defect_detects_asymmetry() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![0.0, 4.0]]);
        assert_eq!(a.symmetry_defect(), 0.5);
    }
}
