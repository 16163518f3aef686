//! Sparse symmetric linear algebra: CSR storage, preconditioned conjugate
//! gradients, a skyline Cholesky factorization and a Lanczos eigenvalue
//! estimator.

mod cg;
mod csr;
mod lanczos;
mod skyline;

pub use cg::{ConjugateGradient, SolveStats};
pub use csr::CsrMatrix;
pub use lanczos::{lanczos_extremes, RitzBounds};
pub use skyline::InverseOperator;
pub use skyline::SkylineCholesky;

/// A square linear map `y = A x`.
pub trait LinearOperator: Sync {
    fn size(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn size(&self) -> usize {
        (**self).size()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

/// Approximate inverse used inside CG: `z ≈ A⁻¹ r`.
pub trait Preconditioner: Sync {
    fn precondition(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Diagonal scaling.
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(matrix: &CsrMatrix) -> Self {
        let inv_diag = matrix
            .diagonal()
            .into_iter()
            .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        Self { inv_diag }
    }
}

impl Preconditioner for Jacobi {
    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
