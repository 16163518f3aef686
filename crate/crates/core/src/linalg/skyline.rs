use super::{CsrMatrix, LinearOperator, Preconditioner};
use crate::error::{Error, Result};

/// Variable-band (skyline) Cholesky factorization `A = L Lᵀ`.
///
/// Row `i` of `L` is stored densely from its first structural column up to
/// the diagonal, so fill stays inside the envelope of the lower triangle.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    /// Factors the symmetric matrix `a`; only the lower triangle is read.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "skyline factorization needs a square matrix");
        let first = a.first_columns();
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for (i, &f) in first.iter().enumerate() {
            start.push(start[i] + (i - f + 1));
        }
        let mut data = vec![0.0; start[n]];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if c <= i {
                    data[start[i] + c - first[i]] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let (done, rest) = data.split_at_mut(start[i]);
            let row_i = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let row_j = &done[start[j]..start[j + 1]];
                let lo = fi.max(fj);
                let s: f64 = row_i[lo - fi..j - fi]
                    .iter()
                    .zip(&row_j[lo - fj..j - fj])
                    .map(|(x, y)| x * y)
                    .sum();
                let ljj = row_j[j - fj];
                row_i[j - fi] = (row_i[j - fi] - s) / ljj;
            }
            let s: f64 = row_i[..i - fi].iter().map(|x| x * x).sum();
            let pivot = row_i[i - fi] - s;
            if !(pivot > 0.0) {
                return Err(Error::NotPositiveDefinite { row: i, pivot });
            }
            row_i[i - fi] = pivot.sqrt();
        }
        Ok(Self { first, start, data })
    }

    pub fn size(&self) -> usize {
        self.first.len()
    }

    /// Stored entries of `L`.
    pub fn envelope(&self) -> usize {
        self.data.len()
    }

    pub fn min_diagonal(&self) -> f64 {
        (0..self.size())
            .map(|i| self.data[self.start[i + 1] - 1])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.size();
        assert_eq!(x.len(), n);
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let s: f64 = row[..i - fi].iter().zip(&x[fi..i]).map(|(l, v)| l * v).sum();
            x[i] = (x[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for (v, l) in x[fi..i].iter_mut().zip(&row[..i - fi]) {
                *v -= l * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

impl Preconditioner for SkylineCholesky {
    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        self.solve_in_place(z);
    }
}

/// `x ↦ A⁻¹ x` through a factorization.
pub struct InverseOperator<'a>(pub &'a SkylineCholesky);

impl LinearOperator for InverseOperator<'_> {
    fn size(&self) -> usize {
        self.0.size()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
        self.0.solve_in_place(y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factors_and_solves_banded_spd() {
        let n = 30;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 6.0));
            for k in [1, 3] {
                if i >= k {
                    t.push((i, i - k, -1.0));
                    t.push((i - k, i, -1.0));
                }
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let chol = SkylineCholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let x = chol.solve(&b);
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(
            SkylineCholesky::factor(&a),
            Err(Error::NotPositiveDefinite { row: 1, .. })
        ));
    }
}
