use super::{axpy, dot, norm, LinearOperator, Preconditioner};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final `‖b − A x‖ / ‖b‖`.
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients for symmetric positive definite systems.
#[derive(Debug, Clone, Copy)]
pub struct ConjugateGradient {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ConjugateGradient {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 10_000,
        }
    }
}

impl ConjugateGradient {
    pub fn new(tolerance: f64, max_iterations: usize) -> Self {
        Self {
            tolerance,
            max_iterations,
        }
    }

    /// Solves `A x = b`, starting from the contents of `x`.
    pub fn solve<A, P>(&self, a: &A, precond: &P, b: &[f64], x: &mut [f64]) -> Result<SolveStats>
    where
        A: LinearOperator + ?Sized,
        P: Preconditioner + ?Sized,
    {
        let n = a.size();
        assert_eq!(b.len(), n);
        assert_eq!(x.len(), n);

        let b_norm = norm(b);
        if b_norm == 0.0 {
            x.fill(0.0);
            return Ok(SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            });
        }

        let mut r = vec![0.0; n];
        a.apply(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let mut rel = norm(&r) / b_norm;
        if rel <= self.tolerance {
            return Ok(SolveStats {
                iterations: 0,
                relative_residual: rel,
            });
        }

        let mut z = vec![0.0; n];
        precond.precondition(&r, &mut z);
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);

        for it in 1..=self.max_iterations {
            a.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::Solver {
                    iterations: it,
                    residual: rel,
                });
            }
            let step = rz / pap;
            axpy(step, &p, x);
            axpy(-step, &ap, &mut r);
            rel = norm(&r) / b_norm;
            if !rel.is_finite() {
                return Err(Error::NonFinite("conjugate gradient residual".into()));
            }
            if rel <= self.tolerance {
                return Ok(SolveStats {
                    iterations: it,
                    relative_residual: rel,
                });
            }
            precond.precondition(&r, &mut z);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        Err(Error::Solver {
            iterations: self.max_iterations,
            residual: rel,
        })
    }
}
