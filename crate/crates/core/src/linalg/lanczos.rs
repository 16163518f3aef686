use nalgebra::{DMatrix, SymmetricEigen};

use super::{axpy, dot, norm, LinearOperator};

/// Extreme Ritz values of a symmetric operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RitzBounds {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

/// Runs `steps` Lanczos iterations with full reorthogonalization and returns
/// the extreme eigenvalues of the resulting tridiagonal matrix.
pub fn lanczos_extremes<A: LinearOperator + ?Sized>(op: &A, steps: usize, start: &[f64]) -> RitzBounds {
    let n = op.size();
    assert_eq!(start.len(), n);
    let steps = steps.min(n).max(1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut alpha = Vec::with_capacity(steps);
    let mut beta: Vec<f64> = Vec::with_capacity(steps);

    let s = norm(start);
    assert!(s > 0.0, "Lanczos start vector must be nonzero");
    let mut q: Vec<f64> = start.iter().map(|v| v / s).collect();
    let mut w = vec![0.0; n];

    for k in 0..steps {
        op.apply(&q, &mut w);
        let a = dot(&q, &w);
        alpha.push(a);
        axpy(-a, &q, &mut w);
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            axpy(-b, prev, &mut w);
        }
        basis.push(q.clone());
        // two passes of Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                axpy(-c, v, &mut w);
            }
        }
        let b = norm(&w);
        if k + 1 == steps || b <= 1e-13 * a.abs().max(1.0) {
            break;
        }
        beta.push(b);
        q = w.iter().map(|v| v / b).collect();
    }

    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t).eigenvalues;
    RitzBounds {
        min: eig.iter().copied().fold(f64::INFINITY, f64::min),
        max: eig.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        steps: m,
    }
}
